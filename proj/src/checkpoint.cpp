#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cnetdst/dst_model.hpp"

namespace cnetdst::model {

namespace {

constexpr const char* kMagic = "cnetdst-ckpt v1";

const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const unsigned b0 = data[i];
    const unsigned b1 = i + 1 < size ? data[i + 1] : 0;
    const unsigned b2 = i + 2 < size ? data[i + 2] : 0;
    out.push_back(kB64Alphabet[b0 >> 2]);
    out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
    out.push_back(i + 1 < size ? kB64Alphabet[((b1 & 0xF) << 2) | (b2 >> 6)]
                               : '=');
    out.push_back(i + 2 < size ? kB64Alphabet[b2 & 0x3F] : '=');
  }
  return out;
}

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  unsigned acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = b64_value(c);
    if (v < 0) throw ParseError("checkpoint: invalid base64 character");
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string tensor_record(const std::string& name, const Tensor& t) {
  std::string line = "tensor " + name + " ";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) line += ',';
    line += std::to_string(t.shape[i]);
  }
  std::vector<unsigned char> bytes(t.data.size() * sizeof(double));
  std::memcpy(bytes.data(), t.data.data(), bytes.size());
  line += ' ';
  line += base64_encode(bytes.data(), bytes.size());
  return line;
}

std::string format_double_exact(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

void save_checkpoint(const DstModel& model, const std::string& path) {
  std::string body;
  body += kMagic;
  body += '\n';
  body += "ontology " + hex64(model.ontology.hash()) + '\n';
  const ModelConfig& c = model.config;
  body += "config embed_dim=" + std::to_string(c.embed_dim) +
          " dense_dim=" + std::to_string(c.dense_dim) +
          " gru_dim=" + std::to_string(c.gru_dim) +
          " combine_dim=" + std::to_string(c.combine_dim) +
          " pooling=" + encoder::pooling_mode_name(c.pooling.mode) +
          " renormalize=" + (c.pooling.renormalize ? "1" : "0") +
          " dropout=" + format_double_exact(c.dropout_rate) +
          " seed=" + std::to_string(c.seed) + " head_group=" + c.head_group +
          '\n';
  body += "vocab " + std::to_string(model.vocab.size());
  for (const std::string& token : model.vocab.tokens()) {
    body += ' ';
    body += token;
  }
  body += '\n';
  DstModel& mutable_model = const_cast<DstModel&>(model);
  for (const NamedParam& p : mutable_model.named_params()) {
    body += tensor_record(p.name, *p.tensor);
    body += '\n';
  }
  body += "checksum " + hex64(fnv1a(body)) + '\n';

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << body;
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

DstModel load_checkpoint(const std::string& path,
                         const Ontology& expected_ontology) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  // Verify the trailing checksum over everything before its own line.
  const std::string::size_type tail = content.rfind("checksum ");
  if (tail == std::string::npos || content.back() != '\n') {
    throw ParseError("checkpoint " + path + ": missing checksum (truncated?)");
  }
  const std::string body = content.substr(0, tail);
  const std::string checksum_line =
      content.substr(tail, content.size() - tail - 1);
  if (checksum_line != "checksum " + hex64(fnv1a(body))) {
    throw ParseError("checkpoint " + path + ": checksum mismatch (truncated "
                     "or corrupted file)");
  }

  std::istringstream ss(body);
  std::string line;
  if (!std::getline(ss, line) || line != kMagic) {
    throw ParseError("checkpoint " + path + ": format version mismatch in "
                     "header '" + line + "'");
  }

  std::uint64_t ontology_hash = 0;
  ModelConfig config;
  Vocabulary vocab;
  bool saw_ontology = false, saw_config = false, saw_vocab = false;
  std::map<std::string, Tensor> tensors;

  while (std::getline(ss, line)) {
    try {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "ontology") {
      std::string hex;
      fields >> hex;
      ontology_hash = std::stoull(hex, nullptr, 16);
      saw_ontology = true;
    } else if (kind == "config") {
      std::string kv;
      while (fields >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
          throw ParseError("checkpoint " + path + ": bad config entry '" + kv +
                           "'");
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "embed_dim") config.embed_dim = std::stoul(value);
        else if (key == "dense_dim") config.dense_dim = std::stoul(value);
        else if (key == "gru_dim") config.gru_dim = std::stoul(value);
        else if (key == "combine_dim") config.combine_dim = std::stoul(value);
        else if (key == "pooling")
          config.pooling.mode = encoder::parse_pooling_mode(value);
        else if (key == "renormalize") config.pooling.renormalize = value == "1";
        else if (key == "dropout") config.dropout_rate = std::stod(value);
        else if (key == "seed") config.seed = std::stoull(value);
        else if (key == "head_group") config.head_group = value;
        else
          throw ParseError("checkpoint " + path + ": unknown config key '" +
                           key + "'");
      }
      saw_config = true;
    } else if (kind == "vocab") {
      std::size_t count = 0;
      fields >> count;
      std::string token;
      std::vector<std::string> tokens;
      while (fields >> token) tokens.push_back(token);
      if (tokens.size() != count || count < 3) {
        throw ParseError("checkpoint " + path + ": vocab record lists " +
                         std::to_string(tokens.size()) + " tokens, header says " +
                         std::to_string(count));
      }
      if (tokens[0] != "<pad>" || tokens[1] != "<unk>" ||
          tokens[2] != "!null") {
        throw ParseError("checkpoint " + path + ": vocab reserved entries "
                         "malformed");
      }
      for (std::size_t i = 3; i < tokens.size(); ++i) vocab.add(tokens[i]);
      if (vocab.size() != count) {
        throw ParseError("checkpoint " + path + ": duplicate vocab tokens");
      }
      saw_vocab = true;
    } else if (kind == "tensor") {
      std::string name, shape_csv, payload;
      fields >> name >> shape_csv >> payload;
      if (name.empty() || shape_csv.empty() || payload.empty()) {
        throw ParseError("checkpoint " + path + ": malformed tensor record");
      }
      Tensor t;
      std::size_t numel = 1;
      std::istringstream shape_ss(shape_csv);
      std::string dim;
      while (std::getline(shape_ss, dim, ',')) {
        t.shape.push_back(std::stoul(dim));
        numel *= t.shape.back();
      }
      const std::vector<unsigned char> bytes = base64_decode(payload);
      if (bytes.size() != numel * sizeof(double)) {
        throw ParseError("checkpoint " + path + ": tensor '" + name +
                         "' payload does not match shape");
      }
      t.data.resize(numel);
      std::memcpy(t.data.data(), bytes.data(), bytes.size());
      tensors[name] = std::move(t);
    } else if (!kind.empty()) {
      throw ParseError("checkpoint " + path + ": unknown record '" + kind +
                       "'");
    }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("checkpoint " + path + ": " + e.what());
    }
  }

  if (!saw_ontology || !saw_config || !saw_vocab) {
    throw ParseError("checkpoint " + path + ": missing ontology/config/vocab "
                     "records");
  }
  if (ontology_hash != expected_ontology.hash()) {
    throw DataError("checkpoint " + path + ": ontology hash mismatch (saved " +
                    hex64(ontology_hash) + ", expected " +
                    hex64(expected_ontology.hash()) + ")");
  }

  DstModel model = DstModel::init(config, expected_ontology, vocab);
  for (const NamedParam& p : model.named_params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) {
      throw ParseError("checkpoint " + path + ": missing tensor '" + p.name +
                       "'");
    }
    if (it->second.shape != p.tensor->shape) {
      throw ParseError("checkpoint " + path + ": shape mismatch for tensor '" +
                       p.name + "': file " + shape_string(it->second) +
                       ", model " + shape_string(*p.tensor));
    }
    *p.tensor = std::move(it->second);
    tensors.erase(it);
  }
  if (!tensors.empty()) {
    throw ParseError("checkpoint " + path + ": unexpected tensor '" +
                     tensors.begin()->first + "'");
  }
  return model;
}

}  // namespace cnetdst::model
