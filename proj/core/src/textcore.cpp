#include "s2r/textcore.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_set>

#include "s2r/error.hpp"

namespace s2r::text {
namespace {

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Byte length of a Unicode whitespace code point starting at s[i], or 0.
std::size_t unicode_space_len(std::string_view s, std::size_t i) {
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const std::size_t left = s.size() - i;
  if (left >= 2 && at(i) == 0xC2 && (at(i + 1) == 0x85 || at(i + 1) == 0xA0)) return 2;
  if (left >= 3) {
    const unsigned char b0 = at(i), b1 = at(i + 1), b2 = at(i + 2);
    if (b0 == 0xE1 && b1 == 0x9A && b2 == 0x80) return 3;                  // U+1680
    if (b0 == 0xE2 && b1 == 0x80 && (b2 <= 0x8A || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF))
      return 3;                                                             // U+2000..200A, 2028, 2029, 202F
    if (b0 == 0xE2 && b1 == 0x81 && b2 == 0x9F) return 3;                  // U+205F
    if (b0 == 0xE3 && b1 == 0x80 && b2 == 0x80) return 3;                  // U+3000
  }
  return 0;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

}  // namespace

TokenSeq tokenize(std::string_view input, bool lowercase) {
  TokenSeq out;
  std::string cur;
  std::size_t i = 0;
  while (i < input.size()) {
    const auto c = static_cast<unsigned char>(input[i]);
    std::size_t skip = is_ascii_space(c) ? 1 : unicode_space_len(input, i);
    if (skip > 0) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      i += skip;
      continue;
    }
    cur.push_back(lowercase && c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    ++i;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(std::span<const std::string> tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.append(sep);
    out.append(tokens[i]);
  }
  return out;
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  std::unordered_set<std::string_view> sa(a.begin(), a.end());
  std::unordered_set<std::string_view> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::span<const std::string> a,
                                                               std::span<const std::string> b) {
  const std::size_t n = a.size(), m = b.size();
  // suffix[i][j] = |LCS(a[i:], b[j:])|
  std::vector<std::vector<std::uint32_t>> suffix(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      suffix[i][j] = a[i] == b[j] ? suffix[i + 1][j + 1] + 1 : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0, j = 0;
  std::uint32_t remaining = suffix[0][0];
  while (remaining > 0) {
    bool advanced = false;
    for (std::size_t ii = i; ii < n && !advanced; ++ii) {
      // The earliest matching b position is always the best one for a[ii]:
      // suffix lengths never grow as j moves right.
      for (std::size_t jj = j; jj < m; ++jj) {
        if (a[ii] != b[jj]) continue;
        if (suffix[ii + 1][jj + 1] + 1 == remaining) {
          out.emplace_back(ii, jj);
          i = ii + 1;
          j = jj + 1;
          --remaining;
          advanced = true;
        }
        break;
      }
    }
    if (!advanced) throw Error("lcs_alignment: inconsistent DP table");
  }
  return out;
}

TokenSeq lcs(std::span<const std::string> a, std::span<const std::string> b) {
  TokenSeq out;
  for (auto [i, j] : lcs_alignment(a, b)) out.push_back(a[i]);
  return out;
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

StopList StopList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open stop-word list: " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line, false);
    if (toks.empty() || toks.front().starts_with('#')) continue;
    for (auto& t : toks) words.insert(std::move(t));
  }
  return StopList(std::move(words));
}

Vocab::Vocab() {
  for (auto t : {kPad, kUnk, kBos, kEos, kBlank}) {
    ids_.emplace(std::string(t), static_cast<int>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    if (t.empty()) throw FormatError("vocabulary token is empty");
    if (!v.ids_.emplace(t, static_cast<int>(v.tokens_.size())).second)
      throw FormatError("duplicate or reserved vocabulary token: " + t);
    v.tokens_.push_back(t);
  }
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

IdSeq Vocab::encode(std::span<const std::string> tokens) const {
  IdSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

TokenSeq Vocab::decode(std::span<const int> ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) h = (h ^ c) * kFnvPrime;
    h = (h ^ 0xFFu) * kFnvPrime;
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary: " + path.string());
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(tokens);
}

Vocab build_vocab(std::span<const TokenSeq> sentences, std::size_t max_size, std::size_t min_freq) {
  if (max_size < Vocab::kNumReserved) throw Error("build_vocab: max_size must be >= 5");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : sentences)
    for (const auto& t : s) ++freq[t];
  Vocab reserved;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq)
    if (n >= min_freq && !reserved.contains(tok)) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  std::vector<std::string> tokens;
  for (auto& [tok, n] : ranked) {
    if (tokens.size() + Vocab::kNumReserved >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocab::from_tokens(tokens);
}

Vocab build_vocab(std::span<const DialoguePair> pairs, std::size_t max_size, std::size_t min_freq) {
  std::vector<TokenSeq> sentences;
  sentences.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    sentences.push_back(p.query);
    sentences.push_back(p.response);
  }
  return build_vocab(sentences, max_size, min_freq);
}

}  // namespace s2r::text
