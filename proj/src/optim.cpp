#include "conch/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace conch::ad {

Matrix glorot_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return glorot_init(rows, cols, rng);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value().rows(), p->value().cols());
    v_.emplace_back(p->value().rows(), p->value().cols());
  }
}

void Adam::step(double weight_decay) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Matrix& w = params_[k]->value();
    const Matrix g = params_[k]->grad();
    auto& m = m_[k].data();
    auto& v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data()[i] + 2.0 * weight_decay * w.data()[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w.data()[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

Tensor l2_penalty(const std::vector<const Parameter*>& params) {
  Tensor total = Tensor::constant(Matrix(1, 1, 0.0));
  for (const Parameter* p : params) total = add(total, sum_squares(p->tensor()));
  return total;
}

namespace {

constexpr char kMagic[] = "CONCH-CKPT v1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::vector<const Parameter*>& params, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + file.string() + "'");
  out.write(kMagic, sizeof(kMagic) - 1);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name().size()));
    out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
    put_u32(out, static_cast<std::uint32_t>(p->value().rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value().cols()));
    out.write(reinterpret_cast<const char*>(p->value().data().data()),
              static_cast<std::streamsize>(p->value().size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint '" + file.string() + "'");
}

void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + file.string() + "'");
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error("'" + file.string() + "' is not a CONCH-CKPT v1 file");
  }
  std::map<std::string, Matrix> stored;
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw Error("truncated checkpoint '" + file.string() + "'");
    stored.emplace(std::move(name), std::move(m));
  }
  for (Parameter* p : params) {
    auto it = stored.find(p->name());
    if (it == stored.end()) throw Error("checkpoint lacks parameter '" + p->name() + "'");
    if (!it->second.same_shape(p->value())) {
      throw Error("checkpoint parameter '" + p->name() + "' has shape " + it->second.shape_string() + ", expected " +
                  p->value().shape_string());
    }
    p->value() = it->second;
  }
}

}  // namespace conch::ad
