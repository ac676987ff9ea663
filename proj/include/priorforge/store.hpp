#pragma once

#include <string>
#include <vector>

#include "priorforge/config.hpp"
#include "priorforge/io.hpp"
#include "priorforge/prior.hpp"
#include "priorforge/synthspace.hpp"

#include "json.hpp"

namespace priorforge::store {

// Dataset directory:
//   manifest.json      counts, seeds, run config, per-record metadata
//   image_emb.prft     [n, d]
//   text_pooled.prft   [n, d]
//   text_tokens.prft   [n, max_text_tokens, d]  (zero rows past caption end)
//   patches.prft       [n, H, W, 3]
//   lab_hist.prft      [n, bins]  (omitted when histograms are disabled)
//   previews/NNNNNN.ppm

struct Dataset {
  config::RunConfig config;
  std::vector<synth::DatasetRecord> records;
  bool has_histograms = true;
};

void write_dataset(const std::string& dir, const std::vector<synth::DatasetRecord>& records,
                   const config::RunConfig& config);
Dataset read_dataset(const std::string& dir);

/// Splits off the tail holdout_fraction of records (by id) for evaluation.
std::pair<std::vector<synth::DatasetRecord>, std::vector<synth::DatasetRecord>>
split_holdout(const std::vector<synth::DatasetRecord>& records, double holdout_fraction);

// Model file (little-endian):
//   "PRFM" | u32 version | u64 header length | header JSON |
//   one TensorFile per parameter tensor, in header "tensors" order.
// The header carries the prior config, noise schedule, run config and
// caller metadata.

struct Model {
  prior::PriorParams params;
  nlohmann::json header;

  const nlohmann::json& run_config() const { return header.at("run_config"); }
  synth::SpaceConfig space() const;
};

std::vector<unsigned char> encode_model(const prior::PriorParams& params,
                                        const config::RunConfig& run_config,
                                        const nlohmann::json& meta);
Model decode_model(const std::vector<unsigned char>& bytes);
void write_model(const std::string& path, const prior::PriorParams& params,
                 const config::RunConfig& run_config, const nlohmann::json& meta);
Model read_model(const std::string& path);

/// Canonical JSON text (sorted keys, two-space indent, trailing newline).
std::string dump(const nlohmann::json& j);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace priorforge::store
