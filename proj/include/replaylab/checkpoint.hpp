// Text checkpoint format for RnnParams:
//   REPLAYLAB-CKPT v1
//   n m d activation kappa sigma_r leak_enabled
//   W_r rows, then W_in rows, then D rows (17 significant digits)
#pragma once

#include "rnn.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace replaylab {

inline constexpr std::string_view kCheckpointMagic = "REPLAYLAB-CKPT v1";

inline void write_checkpoint(std::ostream& os, const RnnParams& p) {
  p.validate();
  os << kCheckpointMagic << '\n';
  os << p.hidden() << ' ' << p.inputs() << ' ' << p.outputs() << ' '
     << p.activation.name() << ' ' << sig17(p.kappa) << ' ' << sig17(p.sigma_r)
     << ' ' << (p.leak_enabled ? 1 : 0) << '\n';
  auto dump = [&os](const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) os << ' ';
        os << sig17(m(i, j));
      }
      os << '\n';
    }
  };
  dump(p.w_rec);
  dump(p.w_in);
  dump(p.d_out);
}

inline std::string checkpoint_text(const RnnParams& p) {
  std::ostringstream os;
  write_checkpoint(os, p);
  return os.str();
}

inline RnnParams read_checkpoint(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kCheckpointMagic,
          ErrorKind::parameter, "not a REPLAYLAB-CKPT v1 checkpoint");
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::parameter,
          "truncated checkpoint header");
  std::istringstream header(line);
  long n = 0, m = 0, d = 0;
  std::string activation, kappa, sigma;
  int leak = 0;
  header >> n >> m >> d >> activation >> kappa >> sigma >> leak;
  require(static_cast<bool>(header) && n > 0 && m > 0 && d > 0,
          ErrorKind::parameter, "malformed checkpoint header");
  RnnParams p;
  p.activation = Activation::parse(activation);
  p.kappa = std::stod(kappa);
  p.sigma_r = std::stod(sigma);
  p.leak_enabled = leak != 0;
  auto load = [&is](long rows, long cols) {
    Mat out(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) {
        std::string token;
        require(static_cast<bool>(is >> token), ErrorKind::parameter,
                "truncated checkpoint weights");
        out(i, j) = std::stod(token);
      }
    return out;
  };
  p.w_rec = load(n, n);
  p.w_in = load(n, m);
  p.d_out = load(d, n);
  p.validate();
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path, const RnnParams& p) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io,
          "cannot open " + path.string() + " for writing");
  write_checkpoint(os, p);
  require(static_cast<bool>(os), ErrorKind::io, "write failed: " + path.string());
}

inline RnnParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  return read_checkpoint(is);
}

/// FNV-1a 64-bit digest of the checkpoint text, as 16 hex digits.
inline std::string checkpoint_id(const RnnParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : checkpoint_text(p)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

}  // namespace replaylab
