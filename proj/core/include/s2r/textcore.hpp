#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <set>
#include <vector>

#include "s2r/types.hpp"

namespace s2r::text {

/// Splits on whitespace (ASCII plus the common Unicode spaces encoded in
/// UTF-8), optionally lowercasing ASCII letters first.
TokenSeq tokenize(std::string_view text, bool lowercase = true);

std::string join(std::span<const std::string> tokens, std::string_view sep = " ");

/// Set-based Jaccard similarity. Two empty sequences are identical (1.0).
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// Index pairs (position in a, position in b) of one longest common
/// subsequence. Among all optimal alignments the one with the
/// lexicographically smallest a-positions is chosen, then the smallest
/// b-positions for those.
std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::span<const std::string> a,
                                                               std::span<const std::string> b);

TokenSeq lcs(std::span<const std::string> a, std::span<const std::string> b);

/// Token-level Levenshtein distance (unit-cost insert, delete, substitute).
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

class StopList {
 public:
  StopList() = default;
  explicit StopList(std::set<std::string> words) : words_(std::move(words)) {}

  /// One token per line, UTF-8. Blank lines and lines starting with '#'
  /// are ignored; surrounding whitespace is trimmed.
  static StopList load(const std::filesystem::path& path);

  bool contains(std::string_view token) const { return words_.find(std::string(token)) != words_.end(); }
  std::size_t size() const { return words_.size(); }
  const std::set<std::string>& words() const { return words_; }

 private:
  std::set<std::string> words_;
};

class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kBosId = 2;
  static constexpr int kEosId = 3;
  static constexpr int kBlankId = 4;
  static constexpr std::size_t kNumReserved = 5;

  /// Only the reserved tokens.
  Vocab();

  /// Reserved tokens are prepended; duplicates and reserved entries in
  /// `tokens` are rejected.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  IdSeq encode(std::span<const std::string> tokens) const;
  TokenSeq decode(std::span<const int> ids) const;

  /// Stable FNV-1a digest of the token list.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Reserved tokens first, then tokens with frequency >= min_freq by
/// descending frequency (ties lexicographic), truncated to max_size total.
Vocab build_vocab(std::span<const DialoguePair> pairs, std::size_t max_size, std::size_t min_freq);
Vocab build_vocab(std::span<const TokenSeq> sentences, std::size_t max_size, std::size_t min_freq);

}  // namespace s2r::text
