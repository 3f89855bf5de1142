#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <stdexcept>

namespace brainage::testing {

std::vector<double> direct_conv3d(const std::vector<double>& input, std::size_t n, std::size_t cin,
                                  std::size_t d, std::size_t h, std::size_t w, const std::vector<double>& weight,
                                  const std::vector<double>& bias, std::size_t cout) {
  std::vector<double> out(n * cout * d * h * w, 0.0);
  auto in_at = [&](std::size_t b, std::size_t c, long z, long y, long x) -> double {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(d) || y >= static_cast<long>(h) ||
        x >= static_cast<long>(w)) {
      return 0.0;
    }
    return input[(((b * cin + c) * d + z) * h + y) * w + x];
  };
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            double acc = bias[o];
            for (std::size_t c = 0; c < cin; ++c)
              for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    const double wv = weight[(((o * cin + c) * 3 + kz) * 3 + ky) * 3 + kx];
                    acc += wv * in_at(b, c, static_cast<long>(z) + kz - 1, static_cast<long>(y) + ky - 1,
                                      static_cast<long>(x) + kx - 1);
                  }
            out[(((b * cout + o) * d + z) * h + y) * w + x] = acc;
          }
  return out;
}

std::vector<double> window_max(const std::vector<double>& input, std::size_t n, std::size_t c, std::size_t d,
                               std::size_t h, std::size_t w) {
  const std::size_t od = d / 2, oh = h / 2, ow = w / 2;
  std::vector<double> out;
  out.reserve(n * c * od * oh * ow);
  for (std::size_t b = 0; b < n * c; ++b)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double m = -INFINITY;
          for (std::size_t i = 0; i < 8; ++i) {
            const std::size_t zz = 2 * z + (i >> 2), yy = 2 * y + ((i >> 1) & 1), xx = 2 * x + (i & 1);
            m = std::max(m, input[((b * d + zz) * h + yy) * w + xx]);
          }
          out.push_back(m);
        }
  return out;
}

std::vector<double> gauss_jordan_solve(DenseMatrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (a[piv][col] == 0.0) throw std::runtime_error("singular matrix");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    const double p = a[col][col];
    for (std::size_t j = 0; j < n; ++j) a[col][j] /= p;
    b[col] /= p;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col];
      for (std::size_t j = 0; j < n; ++j) a[r][j] -= f * a[col][j];
      b[r] -= f * b[col];
    }
  }
  return b;
}

InverseResult gauss_jordan_inverse(DenseMatrix a) {
  const std::size_t n = a.size();
  DenseMatrix inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  double log_det = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (a[piv][col] == 0.0) throw std::runtime_error("singular matrix");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double p = a[col][col];
    // Positive definite input: only |det| is needed.
    log_det += std::log(std::abs(p));
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= p;
      inv[col][j] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return {inv, log_det};
}

double mvn_log_density(const DenseMatrix& cov, const std::vector<double>& y) {
  const auto [inv, log_det] = gauss_jordan_inverse(cov);
  double quad = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) quad += y[i] * inv[i][j] * y[j];
  const double n = static_cast<double>(y.size());
  return -0.5 * (quad + log_det + n * std::log(2.0 * std::numbers::pi));
}

AnovaIcc anova_icc(const DenseMatrix& r) {
  const std::size_t n = r.size(), k = r[0].size();
  double grand = 0.0;
  for (const auto& row : r)
    for (double v : row) grand += v;
  grand /= static_cast<double>(n * k);
  double ss_rows = 0.0, ss_cols = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < k; ++j) m += r[i][j];
    m /= static_cast<double>(k);
    ss_rows += static_cast<double>(k) * (m - grand) * (m - grand);
  }
  for (std::size_t j = 0; j < k; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += r[i][j];
    m /= static_cast<double>(n);
    ss_cols += static_cast<double>(n) * (m - grand) * (m - grand);
  }
  for (const auto& row : r)
    for (double v : row) ss_tot += (v - grand) * (v - grand);
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  AnovaIcc out;
  out.bms = ss_rows / (nd - 1);
  out.jms = ss_cols / (kd - 1);
  out.ems = (ss_tot - ss_rows - ss_cols) / ((nd - 1) * (kd - 1));
  out.icc = (out.bms - out.ems) / (out.bms + (kd - 1) * out.ems + kd * (out.jms - out.ems) / nd);
  return out;
}

std::size_t iterated_halving_width(std::array<std::size_t, 3> dims, std::size_t base, std::size_t blocks) {
  std::size_t channels = base;
  for (std::size_t b = 0; b < blocks; ++b) {
    if (b > 0) channels *= 2;
    for (auto& x : dims) x = x / 2;
  }
  return channels * dims[0] * dims[1] * dims[2];
}

std::vector<float> shift_with_zero_fill(const std::vector<float>& in, std::array<std::size_t, 3> dims, int dz,
                                        int dh, int dw) {
  std::vector<float> out(in.size(), 0.0f);
  const long D = static_cast<long>(dims[0]), H = static_cast<long>(dims[1]), W = static_cast<long>(dims[2]);
  for (long z = 0; z < D; ++z)
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        const long sz = z - dz, sy = y - dh, sx = x - dw;
        if (sz < 0 || sy < 0 || sx < 0 || sz >= D || sy >= H || sx >= W) continue;
        out[static_cast<std::size_t>((z * H + y) * W + x)] = in[static_cast<std::size_t>((sz * H + sy) * W + sx)];
      }
  return out;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  // The test hosts are little-endian; the header is emitted little-endian.
  std::copy(raw, raw + sizeof(T), buf.begin() + static_cast<long>(offset));
}

}  // namespace

std::vector<std::uint8_t> nifti_header_bytes(const NiftiFields& f) {
  std::vector<std::uint8_t> buf(352, 0);
  put<int>(buf, 0, 348);
  put<short>(buf, 40, 3);
  for (int i = 0; i < 3; ++i) put<short>(buf, 42 + 2 * i, f.dims[i]);
  for (int i = 3; i < 8; ++i) put<short>(buf, 42 + 2 * i, 1);
  put<short>(buf, 70, f.datatype);
  put<short>(buf, 72, f.bitpix);
  put<float>(buf, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(buf, 80 + 4 * i, f.pixdim[i]);
  put<float>(buf, 108, f.vox_offset);
  put<float>(buf, 112, f.scl_slope);
  put<float>(buf, 116, f.scl_inter);
  for (int i = 0; i < 4; ++i) buf[344 + i] = static_cast<std::uint8_t>(f.magic[i]);
  return buf;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() / ("brainage-" + tag + "-" + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace brainage::testing
