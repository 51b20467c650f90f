#include "epgd/model_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace epgd {

namespace {

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

template <typename M>
void put_array(std::string& out, const M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw DecodeError("model file: truncated header");
    std::string s = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return s;
  }

  template <typename M>
  void read_array(M& m) {
    const std::size_t need = static_cast<std::size_t>(m.size()) * 8;
    if (bytes_.size() - pos_ < need) throw DecodeError("model file: truncated parameter block");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(bytes_, pos_ + static_cast<std::size_t>(i) * 8);
    pos_ += need;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::istringstream fields(const std::string& line) { return std::istringstream(line); }

template <typename T>
T expect_field(std::istringstream& in, const std::string& line) {
  T v{};
  if (!(in >> v)) throw DecodeError("model file: malformed line '" + line + "'");
  return v;
}

}  // namespace

std::string encode_network(const Network& net) {
  std::string header = std::string(kModelMagic) + "\n";
  header += "input_side " + std::to_string(net.input_side()) + "\n";
  header += "layers " + std::to_string(net.layers().size()) + "\n";
  std::string params;
  std::size_t count = 0;
  for (const auto& layer : net.layers()) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2d<double>>) {
            header += "conv " + std::to_string(l.kernel) + " " + std::to_string(l.in_channels) + " " +
                      std::to_string(l.out_channels) + "\n";
            put_array(params, l.weights);
            put_array(params, l.bias);
            count += static_cast<std::size_t>(l.weights.size() + l.bias.size());
          } else if constexpr (std::is_same_v<L, Relu>) {
            header += "relu\n";
          } else if constexpr (std::is_same_v<L, MaxPool2d>) {
            header += "maxpool " + std::to_string(l.size) + "\n";
          } else {
            header += "dense " + std::to_string(l.weights.cols()) + " " + std::to_string(l.weights.rows()) + "\n";
            put_array(params, l.weights);
            put_array(params, l.bias);
            count += static_cast<std::size_t>(l.weights.size() + l.bias.size());
          }
        },
        layer);
  }
  header += "params " + std::to_string(count) + "\n";
  return header + params;
}

Network decode_network(const std::string& bytes) {
  Cursor cur(bytes);
  if (cur.line() != kModelMagic) throw DecodeError("model file: bad magic");

  std::string line = cur.line();
  auto f = fields(line);
  if (expect_field<std::string>(f, line) != "input_side") throw DecodeError("model file: expected input_side");
  const int side = expect_field<int>(f, line);

  line = cur.line();
  f = fields(line);
  if (expect_field<std::string>(f, line) != "layers") throw DecodeError("model file: expected layer count");
  const int n_layers = expect_field<int>(f, line);
  if (n_layers < 1 || n_layers > 4096) throw DecodeError("model file: implausible layer count");

  std::vector<Layer<double>> layers;
  std::size_t declared = 0;
  for (int i = 0; i < n_layers; ++i) {
    line = cur.line();
    f = fields(line);
    const auto kind = expect_field<std::string>(f, line);
    if (kind == "conv") {
      Conv2d<double> c;
      c.kernel = expect_field<int>(f, line);
      c.in_channels = expect_field<int>(f, line);
      c.out_channels = expect_field<int>(f, line);
      if (c.kernel < 1 || c.in_channels < 1 || c.out_channels < 1) throw DecodeError("model file: bad conv shape");
      c.weights.resize(static_cast<Eigen::Index>(c.kernel) * c.kernel * c.in_channels, c.out_channels);
      c.bias.resize(c.out_channels);
      declared += static_cast<std::size_t>(c.weights.size() + c.bias.size());
      layers.emplace_back(std::move(c));
    } else if (kind == "relu") {
      layers.emplace_back(Relu{});
    } else if (kind == "maxpool") {
      layers.emplace_back(MaxPool2d{expect_field<int>(f, line)});
    } else if (kind == "dense") {
      const int in = expect_field<int>(f, line);
      const int out = expect_field<int>(f, line);
      if (in < 1 || out < 1) throw DecodeError("model file: bad dense shape");
      Dense<double> d;
      d.weights.resize(out, in);
      d.bias.resize(out);
      declared += static_cast<std::size_t>(d.weights.size() + d.bias.size());
      layers.emplace_back(std::move(d));
    } else {
      throw DecodeError("model file: unknown layer '" + kind + "'");
    }
  }

  line = cur.line();
  f = fields(line);
  if (expect_field<std::string>(f, line) != "params") throw DecodeError("model file: expected params");
  if (expect_field<std::size_t>(f, line) != declared) throw DecodeError("model file: parameter count mismatch");

  for (auto& layer : layers) {
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2d<double>> || std::is_same_v<L, Dense<double>>) {
            cur.read_array(l.weights);
            cur.read_array(l.bias);
          }
        },
        layer);
  }
  if (!cur.at_end()) throw DecodeError("model file: trailing bytes");
  try {
    return Network(side, std::move(layers));
  } catch (const Error& e) {
    throw DecodeError(std::string("model file: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const auto bytes = encode_network(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_network(buf.str());
}

}  // namespace epgd
