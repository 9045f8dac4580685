#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmpcnn/cnn_model.hpp"
#include "hmpcnn/hmp_model.hpp"
#include "hmpcnn/synth_data.hpp"

namespace hmpcnn::io {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

std::string hex64(std::uint64_t v);

// ---- model serialization (versioned JSON; parameters round-trip bit-exact)

std::string model_to_json(const HmpModel& model);
HmpModel model_from_json(const std::string& text);
void save_model(const HmpModel& model, const std::string& path);
HmpModel load_model(const std::string& path);

// FNV-1a of the canonical serialized form
std::uint64_t model_id(const HmpModel& model);

// ---- dataset container (binary, little-endian):
// "HMPD" u32-version d1 d2 n seed model_id, then per sample
// d1*d2 float32 pixels (first index major), int8 label, float32 true_eta

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);
void export_dataset_csv(const Dataset& data, const std::string& path);

// ---- predictor container (binary): shapes header, row-major float64
// payload, FNV-1a checksum

void save_predictor(const Predictor& p, const std::string& path);
Predictor load_predictor(const std::string& path);

// ---- plumbing

void atomic_write_text(const std::string& path, const std::string& contents);
std::string read_text(const std::string& path);

// %.17g rendering: decimal point, round-trip exact
std::string format_double(double v);

// CSV with comma separation, LF line endings, header row
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& text() const { return text_; }

 private:
  std::string text_;
  std::size_t columns_;
};

}  // namespace hmpcnn::io
