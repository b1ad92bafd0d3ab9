#include "s2r/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "s2r/error.hpp"

namespace s2r::data {
namespace {

using json = nlohmann::json;

std::string field_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw FormatError("line " + std::to_string(line_no) + ": missing string field \"" + key + "\"");
  return it->get<std::string>();
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw FormatError(path.string() + " line " + std::to_string(line_no) + ": not an object");
    fn(obj, line_no);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json quad_json(const Quadruple& q) {
  return json{{"id", q.pair_id},
              {"rid", q.retrieved_id},
              {"q", text::join(q.q)},
              {"r", text::join(q.r)},
              {"rq", text::join(q.rq)},
              {"rr", text::join(q.rr)},
              {"score", q.score}};
}

Quadruple quad_from_json(const json& obj, std::size_t line_no) {
  Quadruple q;
  q.q = text::tokenize(field_string(obj, "q", line_no), false);
  q.r = text::tokenize(field_string(obj, "r", line_no), false);
  q.rq = text::tokenize(field_string(obj, "rq", line_no), false);
  q.rr = text::tokenize(field_string(obj, "rr", line_no), false);
  q.score = obj.value("score", 0.0);
  q.pair_id = obj.value("id", std::int64_t{-1});
  q.retrieved_id = obj.value("rid", std::int64_t{-1});
  return q;
}

}  // namespace

LoadResult parse_pairs(std::istream& in, bool lowercase) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw FormatError("line " + std::to_string(line_no) + ": not an object");
    DialoguePair p;
    p.query = text::tokenize(field_string(obj, "query", line_no), lowercase);
    p.response = text::tokenize(field_string(obj, "response", line_no), lowercase);
    if (p.query.empty() || p.response.empty()) {
      ++result.skipped;
      continue;
    }
    p.id = static_cast<std::int64_t>(result.pairs.size());
    result.pairs.push_back(std::move(p));
  }
  return result;
}

LoadResult load_pairs(const std::filesystem::path& path, bool lowercase) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open corpus: " + path.string());
  try {
    return parse_pairs(in, lowercase);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + " " + e.what());
  }
}

void save_pairs(const std::filesystem::path& path, std::span<const DialoguePair> pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs)
    out << json{{"id", p.id}, {"query", text::join(p.query)}, {"response", text::join(p.response)}}.dump() << '\n';
}

// ---------------------------------------------------------------------------

InvertedIndex InvertedIndex::build(std::span<const DialoguePair> pairs, IndexSide side) {
  if (pairs.empty()) throw Error("build_index: empty corpus");
  InvertedIndex index;
  index.side_ = side;

  std::vector<const DialoguePair*> sorted;
  sorted.reserve(pairs.size());
  for (const auto& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });

  for (const auto* p : sorted) {
    const TokenSeq& doc = side == IndexSide::kQuery ? p->query : p->response;
    if (!index.slots_.emplace(p->id, index.doc_ids_.size()).second)
      throw Error("build_index: duplicate pair id " + std::to_string(p->id));
    index.doc_ids_.push_back(p->id);
    index.doc_lengths_.push_back(doc.size());
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : doc) ++tf[t];
    for (const auto& [tok, n] : tf) index.postings_[tok].push_back({p->id, n});
  }

  index.doc_norms_.assign(index.doc_ids_.size(), 0.0);
  for (const auto& [tok, plist] : index.postings_) {
    const double w_idf = index.idf(tok);
    for (const auto& post : plist) {
      const double w = post.tf * w_idf;
      index.doc_norms_[index.slots_.at(post.pair_id)] += w * w;
    }
  }
  for (auto& n : index.doc_norms_) n = std::sqrt(n);
  return index;
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& token) const {
  static const std::vector<Posting> kEmpty;
  auto it = postings_.find(token);
  return it == postings_.end() ? kEmpty : it->second;
}

std::size_t InvertedIndex::slot_of(std::int64_t pair_id) const {
  auto it = slots_.find(pair_id);
  if (it == slots_.end()) throw Error("pair id not indexed: " + std::to_string(pair_id));
  return it->second;
}

std::size_t InvertedIndex::doc_length(std::int64_t pair_id) const { return doc_lengths_[slot_of(pair_id)]; }

double InvertedIndex::idf(const std::string& token) const {
  const double df = static_cast<double>(postings(token).size());
  return std::log(1.0 + static_cast<double>(doc_count()) / (1.0 + df));
}

std::vector<ScoredPair> InvertedIndex::retrieve(std::span<const std::string> probe, std::size_t k,
                                                std::int64_t exclude) const {
  if (k == 0) throw Error("retrieve: k must be >= 1");
  std::map<std::string, std::uint32_t> tf;
  for (const auto& t : probe) ++tf[t];

  std::unordered_map<std::size_t, double> dots;
  double probe_norm = 0.0;
  for (const auto& [tok, n] : tf) {
    auto it = postings_.find(tok);
    if (it == postings_.end()) continue;
    const double w_idf = idf(tok);
    const double qw = n * w_idf;
    probe_norm += qw * qw;
    for (const auto& post : it->second) {
      if (post.pair_id == exclude) continue;
      dots[slots_.at(post.pair_id)] += qw * post.tf * w_idf;
    }
  }
  if (dots.empty()) return {};
  probe_norm = std::sqrt(probe_norm);

  std::vector<ScoredPair> scored;
  scored.reserve(dots.size());
  for (const auto& [slot, dot] : dots) scored.push_back({doc_ids_[slot], dot / (probe_norm * doc_norms_[slot])});
  auto better = [](const ScoredPair& a, const ScoredPair& b) {
    return a.score != b.score ? a.score > b.score : a.pair_id < b.pair_id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
  scored.resize(keep);
  return scored;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  json postings = json::object();
  for (const auto& [tok, plist] : postings_) {
    json arr = json::array();
    for (const auto& p : plist) arr.push_back({p.pair_id, p.tf});
    postings[tok] = std::move(arr);
  }
  json docs = json::array();
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) docs.push_back({doc_ids_[i], doc_lengths_[i]});
  json root{{"format", "s2r-index"},
            {"version", 1},
            {"keyed_on", side_ == IndexSide::kQuery ? "query" : "response"},
            {"doc_count", doc_ids_.size()},
            {"docs", std::move(docs)},
            {"postings", std::move(postings)}};
  auto out = open_out(path);
  out << root.dump() << '\n';
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open index: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (root.value("format", "") != "s2r-index" || root.value("version", 0) != 1)
    throw FormatError(path.string() + ": not an s2r index (version 1)");

  // Rebuild pseudo-documents and re-run the builder so norms are derived
  // by the same code path.
  std::vector<DialoguePair> docs;
  std::unordered_map<std::int64_t, std::size_t> at;
  for (const auto& d : root.at("docs")) {
    DialoguePair p;
    p.id = d.at(0).get<std::int64_t>();
    at[p.id] = docs.size();
    docs.push_back(std::move(p));
  }
  const bool by_query = root.at("keyed_on").get<std::string>() == "query";
  for (const auto& [tok, plist] : root.at("postings").items()) {
    for (const auto& p : plist) {
      auto& doc = docs.at(at.at(p.at(0).get<std::int64_t>()));
      auto& side = by_query ? doc.query : doc.response;
      side.insert(side.end(), p.at(1).get<std::uint32_t>(), tok);
    }
  }
  return build(docs, by_query ? IndexSide::kQuery : IndexSide::kResponse);
}

std::vector<ScoredPair> test_retrieval(const InvertedIndex& query_index, std::span<const std::string> query,
                                       std::size_t k) {
  if (query_index.side() != IndexSide::kQuery) throw Error("test_retrieval requires a query-keyed index");
  return query_index.retrieve(query, k);
}

// ---------------------------------------------------------------------------

std::vector<Quadruple> build_quadruples(std::span<const DialoguePair> pairs, const InvertedIndex& response_index,
                                        const QuadOptions& options) {
  if (response_index.side() != IndexSide::kResponse)
    throw Error("build_quadruples requires a response-keyed index");
  std::unordered_map<std::int64_t, const DialoguePair*> by_id;
  for (const auto& p : pairs) by_id.emplace(p.id, &p);

  std::vector<Quadruple> quads;
  for (const auto& p : pairs) {
    for (const auto& hit : response_index.retrieve(p.response, options.k, p.id)) {
      auto it = by_id.find(hit.pair_id);
      if (it == by_id.end()) continue;
      const DialoguePair& cand = *it->second;
      const double sim = text::jaccard(p.response, cand.response);
      if (sim < options.lo || sim > options.hi) continue;
      quads.push_back({p.query, p.response, cand.query, cand.response, hit.score, p.id, cand.id});
    }
  }

  if (options.max_quads > 0 && quads.size() > options.max_quads) {
    std::vector<std::size_t> order(quads.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    shuffle(order, rng);
    order.resize(options.max_quads);
    std::sort(order.begin(), order.end());
    std::vector<Quadruple> sampled;
    sampled.reserve(order.size());
    for (auto i : order) sampled.push_back(std::move(quads[i]));
    quads = std::move(sampled);
  }
  return quads;
}

ProxySkeleton make_proxy_skeleton(std::span<const std::string> response, std::span<const std::string> retrieved,
                                  const text::StopList& stoplist) {
  TokenSeq r_star;
  for (const auto& t : response)
    if (!stoplist.contains(t)) r_star.push_back(t);
  TokenSeq rr_star;
  std::vector<std::size_t> rr_pos;  // position in `retrieved` of each filtered token
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    if (stoplist.contains(retrieved[i])) continue;
    rr_star.push_back(retrieved[i]);
    rr_pos.push_back(i);
  }

  ProxySkeleton out;
  out.labels.assign(retrieved.size(), 0);
  for (auto [i, j] : text::lcs_alignment(r_star, rr_star)) out.labels[rr_pos[j]] = 1;
  out.skeleton.reserve(retrieved.size());
  for (std::size_t i = 0; i < retrieved.size(); ++i)
    out.skeleton.push_back(out.labels[i] ? retrieved[i] : std::string(kBlank));
  return out;
}

void write_quads(const std::filesystem::path& path, std::span<const Quadruple> quads) {
  auto out = open_out(path);
  for (const auto& q : quads) out << quad_json(q).dump() << '\n';
}

std::vector<Quadruple> read_quads(const std::filesystem::path& path) {
  std::vector<Quadruple> quads;
  for_each_json_line(path, [&](const json& obj, std::size_t line_no) { quads.push_back(quad_from_json(obj, line_no)); });
  return quads;
}

void write_labeled(const std::filesystem::path& path, std::span<const LabeledQuad> quads) {
  auto out = open_out(path);
  for (const auto& lq : quads) {
    json obj = quad_json(lq.quad);
    obj["m"] = lq.proxy.labels;
    obj["t"] = text::join(lq.proxy.skeleton);
    out << obj.dump() << '\n';
  }
}

std::vector<LabeledQuad> read_labeled(const std::filesystem::path& path) {
  std::vector<LabeledQuad> quads;
  for_each_json_line(path, [&](const json& obj, std::size_t line_no) {
    LabeledQuad lq;
    lq.quad = quad_from_json(obj, line_no);
    auto it = obj.find("m");
    if (it == obj.end() || !it->is_array())
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": missing label list \"m\"");
    lq.proxy.labels = it->get<std::vector<int>>();
    if (lq.proxy.labels.size() != lq.quad.rr.size())
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": |m| != |rr|");
    for (std::size_t i = 0; i < lq.quad.rr.size(); ++i)
      lq.proxy.skeleton.push_back(lq.proxy.labels[i] ? lq.quad.rr[i] : std::string(kBlank));
    quads.push_back(std::move(lq));
  });
  return quads;
}

}  // namespace s2r::data
