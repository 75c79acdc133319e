#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metaseq/episodes.hpp"
#include "metaseq/model.hpp"
#include "metaseq/scan.hpp"
#include "metaseq/training.hpp"

// On-disk artifact formats: corpus and split files, episode dumps, results
// tables, loss curves, run manifests, and attention-trace exports (text and
// a dependency-free SVG heatmap).
namespace metaseq::artifacts {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

std::uint64_t fnv1a64(std::string_view data);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

void write_corpus(const std::string& path, const scan::Corpus& corpus);
scan::Corpus read_corpus(const std::string& path);

// Flat key=value config files (one per line, # comments).
std::string format_config(const std::vector<std::pair<std::string, std::string>>& kv);
std::vector<std::pair<std::string, std::string>> parse_config(const std::string& text);

// Tab-separated per-seed rows plus a mean/SD summary row.
std::string results_tsv(const training::ExperimentReport& report);

// One "episode loss" pair per line.
std::string loss_curve_text(const training::LossCurve& curve);

struct ManifestEntry {
  std::string name;
  std::uint64_t checksum = 0;
};

// JSON manifest listing every artifact a command produced.
std::string run_manifest_json(const std::string& command,
                              const std::vector<std::pair<std::string, std::string>>& config,
                              const std::vector<ManifestEntry>& artifacts);

// Attention trace for all decoded queries of one episode: query tokens,
// support items, memory attention rows, decoder attention rows, row sums.
std::string trace_text(const episodes::Episode& episode,
                       const std::vector<model::QueryTrace>& traces);

// Self-contained heatmap (memory attention left, decoder attention right).
std::string trace_svg(const episodes::Episode& episode, const model::QueryTrace& trace);

}  // namespace metaseq::artifacts
