#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace s2r::cli {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Artifact layout of one experiment directory.
class Workdir {
 public:
  explicit Workdir(fs::path root);

  const fs::path& root() const { return root_; }
  fs::path pairs() const { return root_ / "pairs.jsonl"; }
  fs::path vocab() const { return root_ / "vocab.txt"; }
  fs::path response_index() const { return root_ / "index.response.json"; }
  fs::path query_index() const { return root_ / "index.query.json"; }
  fs::path quads() const { return root_ / "quads.jsonl"; }
  fs::path skeletons() const { return root_ / "skeletons.jsonl"; }
  fs::path checkpoint(const std::string& name) const { return root_ / "ckpt" / (name + ".skr"); }
  fs::path train_log(const std::string& name) const { return root_ / "logs" / ("train." + name + ".jsonl"); }
  fs::path generations() const { return root_ / "generations.jsonl"; }
  fs::path report_json() const { return root_ / "report.json"; }
  fs::path report_csv() const { return root_ / "report.csv"; }
  fs::path manifest() const { return root_ / "manifest.json"; }

  /// Throws PreconditionError naming the stage that produces `path`.
  static void require(const fs::path& path, const std::string& producer);

  /// Records one stage in manifest.json: the config hash and the SHA-256
  /// of every input and output file. Keys are sorted and no timestamps
  /// are stored, so identical runs leave identical manifests.
  void record(const std::string& stage, const std::string& config_hash, const std::map<std::string, fs::path>& inputs,
              const std::map<std::string, fs::path>& outputs) const;

 private:
  fs::path root_;
};

}  // namespace s2r::cli
