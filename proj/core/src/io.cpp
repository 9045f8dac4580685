#include "hmpcnn/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace hmpcnn::io {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json node_to_json(const SmoothNodeFunction& g) {
  json j;
  j["family"] = to_string(g.family);
  j["params"] = g.params;
  if (g.inner) j["inner"] = node_to_json(*g.inner);
  return j;
}

SmoothNodeFunction node_from_json(const json& j) {
  SmoothNodeFunction g;
  g.family = node_family_from_string(j.at("family").get<std::string>());
  g.params = j.at("params").get<std::vector<double>>();
  if (j.contains("inner")) {
    g.inner = std::make_shared<const SmoothNodeFunction>(node_from_json(j.at("inner")));
  }
  return g;
}

}  // namespace

std::string model_to_json(const HmpModel& model) {
  json j;
  j["format"] = "hmp-model";
  j["version"] = 1;
  j["level"] = model.level();
  j["d1"] = model.d1();
  j["d2"] = model.d2();
  j["c_cert"] = model.lipschitz();
  json nodes = json::array();
  for (const auto& g : model.nodes()) nodes.push_back(node_to_json(g));
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

HmpModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format").get<std::string>() != "hmp-model") {
    throw std::invalid_argument("model_from_json: not a model document");
  }
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("model_from_json: unsupported version");
  }
  std::vector<SmoothNodeFunction> nodes;
  for (const auto& nj : j.at("nodes")) nodes.push_back(node_from_json(nj));
  return HmpModel(j.at("level").get<int>(), j.at("d1").get<int>(), j.at("d2").get<int>(),
                  std::move(nodes));
}

void save_model(const HmpModel& model, const std::string& path) {
  atomic_write_text(path, model_to_json(model));
}

HmpModel load_model(const std::string& path) { return model_from_json(read_text(path)); }

std::uint64_t model_id(const HmpModel& model) { return fnv1a64(model_to_json(model)); }

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw std::invalid_argument("binary file truncated");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void write_file(const std::string& path, const std::string& bytes) {
  atomic_write_text(path, bytes);
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  std::string out;
  out.reserve(64 + static_cast<std::size_t>(data.size()) *
                       (static_cast<std::size_t>(data.d1) * data.d2 * 4 + 5));
  out.append("HMPD", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.d1));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.d2));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  put<std::uint64_t>(out, data.seed);
  put<std::uint64_t>(out, data.model_id);
  for (const auto& s : data.samples) {
    for (double px : s.image.pixels()) put<float>(out, static_cast<float>(px));
    put<std::int8_t>(out, static_cast<std::int8_t>(s.label));
    put<float>(out, static_cast<float>(s.true_eta));
  }
  write_file(path, out);
}

Dataset load_dataset(const std::string& path) {
  const std::string in = read_text(path);
  std::size_t off = 0;
  if (in.size() < 4 || in.compare(0, 4, "HMPD") != 0) {
    throw std::invalid_argument("load_dataset: bad magic in " + path);
  }
  off = 4;
  if (get<std::uint32_t>(in, off) != 1) {
    throw std::invalid_argument("load_dataset: unsupported version");
  }
  Dataset d;
  d.d1 = static_cast<int>(get<std::uint32_t>(in, off));
  d.d2 = static_cast<int>(get<std::uint32_t>(in, off));
  const std::uint64_t n = get<std::uint64_t>(in, off);
  d.seed = get<std::uint64_t>(in, off);
  d.model_id = get<std::uint64_t>(in, off);
  d.samples.reserve(n);
  const std::size_t npx = static_cast<std::size_t>(d.d1) * d.d2;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::vector<double> px(npx);
    for (auto& v : px) v = get<float>(in, off);
    const int label = get<std::int8_t>(in, off);
    const double eta = get<float>(in, off);
    d.samples.push_back(LabeledSample{ImageGrid(d.d1, d.d2, std::move(px)), label, eta});
  }
  return d;
}

void export_dataset_csv(const Dataset& data, const std::string& path) {
  std::vector<std::string> header = {"sample", "label", "true_eta"};
  for (int i = 0; i < data.d1; ++i) {
    for (int j = 0; j < data.d2; ++j) {
      header.push_back("px_" + std::to_string(i) + "_" + std::to_string(j));
    }
  }
  CsvWriter csv(std::move(header));
  for (int s = 0; s < data.size(); ++s) {
    std::vector<std::string> row = {std::to_string(s), std::to_string(data.samples[s].label),
                                    format_double(data.samples[s].true_eta)};
    for (double px : data.samples[s].image.pixels()) row.push_back(format_double(px));
    csv.add_row(row);
  }
  atomic_write_text(path, csv.text());
}

void save_predictor(const Predictor& p, const std::string& path) {
  check_shapes(p.cnn_arch, p.cnn);
  check_shapes(p.fnn_arch, p.fnn);
  std::string out;
  out.append("HMPW", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.cnn_arch.d1));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.cnn_arch.d2));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.cnn_arch.layers()));
  for (int k : p.cnn_arch.channels) put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
  for (int m : p.cnn_arch.filter_sizes) put<std::uint32_t>(out, static_cast<std::uint32_t>(m));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.fnn_arch.layers()));
  for (int k : p.fnn_arch.widths) put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
  put<double>(out, p.beta.beta);

  std::string payload;
  auto put_vec = [&](const std::vector<double>& v) {
    for (double x : v) put<double>(payload, x);
  };
  for (const auto& l : p.cnn.layers) {
    put_vec(l.w);
    put_vec(l.bias);
  }
  put_vec(p.cnn.out);
  for (const auto& l : p.fnn.layers) {
    put_vec(l.w);
    put_vec(l.bias);
  }
  put_vec(p.fnn.out);
  put<double>(payload, p.fnn.out_bias);

  out += payload;
  put<std::uint64_t>(out, fnv1a64(payload.data(), payload.size()));
  write_file(path, out);
}

Predictor load_predictor(const std::string& path) {
  const std::string in = read_text(path);
  if (in.size() < 4 || in.compare(0, 4, "HMPW") != 0) {
    throw std::invalid_argument("load_predictor: bad magic in " + path);
  }
  std::size_t off = 4;
  if (get<std::uint32_t>(in, off) != 1) {
    throw std::invalid_argument("load_predictor: unsupported version");
  }
  Predictor p;
  p.cnn_arch.d1 = static_cast<int>(get<std::uint32_t>(in, off));
  p.cnn_arch.d2 = static_cast<int>(get<std::uint32_t>(in, off));
  const int l1 = static_cast<int>(get<std::uint32_t>(in, off));
  p.cnn_arch.channels.resize(l1);
  p.cnn_arch.filter_sizes.resize(l1);
  for (auto& k : p.cnn_arch.channels) k = static_cast<int>(get<std::uint32_t>(in, off));
  for (auto& m : p.cnn_arch.filter_sizes) m = static_cast<int>(get<std::uint32_t>(in, off));
  const int l2 = static_cast<int>(get<std::uint32_t>(in, off));
  p.fnn_arch.widths.resize(l2);
  for (auto& k : p.fnn_arch.widths) k = static_cast<int>(get<std::uint32_t>(in, off));
  p.beta.beta = get<double>(in, off);

  const std::size_t payload_start = off;
  p.cnn = zero_cnn_weights(p.cnn_arch);
  p.fnn = zero_fnn_weights(p.fnn_arch);
  auto get_vec = [&](std::vector<double>& v) {
    for (auto& x : v) x = get<double>(in, off);
  };
  for (auto& l : p.cnn.layers) {
    get_vec(l.w);
    get_vec(l.bias);
  }
  get_vec(p.cnn.out);
  for (auto& l : p.fnn.layers) {
    get_vec(l.w);
    get_vec(l.bias);
  }
  get_vec(p.fnn.out);
  p.fnn.out_bias = get<double>(in, off);

  const std::uint64_t expect = fnv1a64(in.data() + payload_start, off - payload_start);
  const std::uint64_t stored = get<std::uint64_t>(in, off);
  if (expect != stored) {
    throw std::invalid_argument("load_predictor: checksum mismatch in " + path);
  }
  return p;
}

void atomic_write_text(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text_ += ',';
    text_ += header[i];
  }
  text_ += '\n';
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

}  // namespace hmpcnn::io
