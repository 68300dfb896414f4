#pragma once
// Checkpoint directory layout:
//   manifest      UTF-8 key=value lines (configs, step, iteration)
//   tensors.bin   repeated records: u32 LE name length, UTF-8 name,
//                 u32 LE rank, rank x u32 LE dims, dims-product f32 LE
//                 values (row-major)
//   vocab.txt     one token per line in id order
//   state.txt     loop id sets
//   curriculum.jsonl
// Writers are canonical (fixed key and tensor order) so identical runs
// produce byte-identical checkpoints.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aclm/corpus.hpp"
#include "aclm/model.hpp"

namespace aclm {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_u32_le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32_le(std::istream& in, uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
      (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write manifest: " + path);
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

inline std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("corrupt checkpoint: missing manifest at " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw CheckpointError("corrupt checkpoint: manifest line " + std::to_string(line_no) +
                            " has no '='");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& manifest_get(const std::map<std::string, std::string>& kv,
                                       const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("corrupt checkpoint: manifest missing key " + key);
  return it->second;
}

// ---------------------------------------------------------------------------
// tensors.bin
// ---------------------------------------------------------------------------

inline void write_tensor_record(std::ostream& out, const std::string& name,
                                const Mat<float>& m) {
  detail::write_u32_le(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  detail::write_u32_le(out, 2);
  detail::write_u32_le(out, static_cast<uint32_t>(m.rows()));
  detail::write_u32_le(out, static_cast<uint32_t>(m.cols()));
  std::vector<float> row_major(static_cast<size_t>(m.size()));
  size_t idx = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) row_major[idx++] = m(r, c);
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(row_major.size() * sizeof(float)));
}

inline std::map<std::string, Mat<float>> read_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("corrupt checkpoint: missing tensors.bin at " + path);
  std::map<std::string, Mat<float>> out;
  uint32_t name_len = 0;
  while (detail::read_u32_le(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw CheckpointError("corrupt checkpoint: truncated tensors.bin (name)");
    uint32_t rank = 0;
    if (!detail::read_u32_le(in, rank) || rank != 2)
      throw CheckpointError("corrupt checkpoint: tensors.bin bad rank for " + name);
    uint32_t rows = 0, cols = 0;
    if (!detail::read_u32_le(in, rows) || !detail::read_u32_le(in, cols))
      throw CheckpointError("corrupt checkpoint: truncated tensors.bin (dims)");
    std::vector<float> data(static_cast<size_t>(rows) * cols);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float))))
      throw CheckpointError("corrupt checkpoint: truncated tensors.bin (values of " + name + ")");
    Mat<float> m(rows, cols);
    size_t idx = 0;
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) m(r, c) = data[idx++];
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// vocab
// ---------------------------------------------------------------------------

inline void write_vocab(const std::string& path, const Vocab& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write vocab: " + path);
  for (const auto& tok : v.id_to_token) out << tok << '\n';
}

inline Vocab read_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("corrupt checkpoint: missing vocab.txt at " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) v.id_to_token.push_back(line);
  if (v.size() < 3 || v.id_to_token[0] != Vocab::kPadToken ||
      v.id_to_token[1] != Vocab::kMaskToken || v.id_to_token[2] != Vocab::kUnkToken)
    throw CheckpointError("corrupt checkpoint: malformed vocab.txt");
  for (int id = 0; id < v.size(); ++id) v.token_to_id[v.id_to_token[static_cast<size_t>(id)]] = id;
  v.max_size = v.size();
  return v;
}

// ---------------------------------------------------------------------------
// model-level save/load (loop state is layered on top in loop.hpp)
// ---------------------------------------------------------------------------

inline void append_model_config_manifest(std::vector<std::pair<std::string, std::string>>& kv,
                                         const ModelConfig& m) {
  kv.emplace_back("model.n_layers", std::to_string(m.n_layers));
  kv.emplace_back("model.hidden_size", std::to_string(m.hidden_size));
  kv.emplace_back("model.n_heads", std::to_string(m.n_heads));
  kv.emplace_back("model.ff_size", std::to_string(m.ff_size));
  kv.emplace_back("model.vocab_size", std::to_string(m.vocab_size));
  kv.emplace_back("model.seq_len", std::to_string(m.seq_len));
  kv.emplace_back("model.dropout_hidden", detail::format_double(m.dropout_hidden));
  kv.emplace_back("model.dropout_attn", detail::format_double(m.dropout_attn));
  kv.emplace_back("model.elc_weighting", m.elc_weighting ? "1" : "0");
  kv.emplace_back("model.tied_output", m.tied_output ? "1" : "0");
  kv.emplace_back("model.layer_norm_eps", detail::format_double(m.layer_norm_eps));
}

inline ModelConfig model_config_from_manifest(const std::map<std::string, std::string>& kv) {
  ModelConfig m;
  m.n_layers = std::stoi(manifest_get(kv, "model.n_layers"));
  m.hidden_size = std::stoi(manifest_get(kv, "model.hidden_size"));
  m.n_heads = std::stoi(manifest_get(kv, "model.n_heads"));
  m.ff_size = std::stoi(manifest_get(kv, "model.ff_size"));
  m.vocab_size = std::stoi(manifest_get(kv, "model.vocab_size"));
  m.seq_len = std::stoi(manifest_get(kv, "model.seq_len"));
  m.dropout_hidden = std::stod(manifest_get(kv, "model.dropout_hidden"));
  m.dropout_attn = std::stod(manifest_get(kv, "model.dropout_attn"));
  m.elc_weighting = manifest_get(kv, "model.elc_weighting") == "1";
  m.tied_output = manifest_get(kv, "model.tied_output") == "1";
  m.layer_norm_eps = std::stod(manifest_get(kv, "model.layer_norm_eps"));
  return m;
}

inline void assign_tensors(TensorBundle<float>& bundle, const ModelConfig& cfg,
                           const std::map<std::string, Mat<float>>& loaded,
                           const std::string& prefix = "") {
  for_each_tensor(bundle, cfg, [&](const std::string& name, Mat<float>& m) {
    auto it = loaded.find(prefix + name);
    if (it == loaded.end())
      throw CheckpointError("corrupt checkpoint: missing tensor " + prefix + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
      throw CheckpointError("corrupt checkpoint: tensor shape mismatch for " + prefix + name);
    m = it->second;
  });
}

// Model + vocab only; enough for eval/score commands.
struct LoadedModel {
  MaskedLM<float> model;
  Vocab vocab;
  std::map<std::string, std::string> manifest;
};

inline LoadedModel load_model_checkpoint(const std::string& dir) {
  LoadedModel lm;
  lm.manifest = read_manifest(dir + "/manifest");
  if (std::stoi(manifest_get(lm.manifest, "format_version")) != kCheckpointFormatVersion)
    throw CheckpointError("corrupt checkpoint: unsupported format_version " +
                          manifest_get(lm.manifest, "format_version"));
  lm.model = MaskedLM<float>(model_config_from_manifest(lm.manifest));
  assign_tensors(lm.model.p, lm.model.cfg, read_tensors(dir + "/tensors.bin"));
  lm.vocab = read_vocab(dir + "/vocab.txt");
  if (lm.vocab.size() != lm.model.cfg.vocab_size)
    throw CheckpointError("corrupt checkpoint: vocab.txt size does not match model.vocab_size");
  return lm;
}

}  // namespace aclm
