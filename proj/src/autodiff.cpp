#include "nl2fol/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace nl2fol::ad {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

double g_tanh_backward_scale = 1.0;

}  // namespace

double tanh_backward_scale() { return g_tanh_backward_scale; }
void set_tanh_backward_scale(double s) { g_tanh_backward_scale = s; }

Param* ParamStore::dense(const std::string& name, int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform_real(-limit, limit);
  return raw(name, std::move(m));
}

Param* ParamStore::zeros(const std::string& name, int rows, int cols) {
  return raw(name, Mat::Zero(rows, cols));
}

Param* ParamStore::raw(const std::string& name, Mat value) {
  if (index_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
  params_.push_back(std::make_unique<Param>(name, std::move(value)));
  Param* p = params_.back().get();
  index_[name] = p;
  return p;
}

Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

Param* ParamStore::at(const std::string& name) const {
  Param* p = find(name);
  if (!p) throw std::runtime_error("unknown parameter: " + name);
  return p;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (auto& p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params_) p->grad *= s;
  }
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::clear() {
  params_.clear();
  index_.clear();
}

Var Tape::push_owned(Mat v) {
  Node n;
  n.grad = Mat::Zero(v.rows(), v.cols());
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::val(int i) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  return n.param ? n.param->value : n.value;
}

Mat& Tape::grd(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  return n.param ? n.param->grad : n.grad;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  const Mat& x = val(a.idx);
  const Mat& y = val(b.idx);
  require(x.rows() == y.rows() && x.cols() == y.cols(), std::string(op) + ": shape mismatch");
}

void Tape::check_vector(Var a, const char* op) const {
  require(val(a.idx).cols() == 1, std::string(op) + ": column vector required");
}

Var Tape::constant(Mat v) { return push_owned(std::move(v)); }

Var Tape::leaf(Param* p) {
  Node n;
  n.param = p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::lookup(Param* table, int row) {
  require(row >= 0 && row < table->value.rows(), "lookup: row out of range");
  Var out = push_owned(table->value.row(row).transpose());
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, table, row] {
    table->grad.row(row) += nodes_[static_cast<std::size_t>(out.idx)].grad.transpose();
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Var out = push_owned(val(a.idx) + val(b.idx));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, b] {
    const Mat& g = grd(out.idx);
    grd(a.idx) += g;
    grd(b.idx) += g;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Var out = push_owned(val(a.idx) - val(b.idx));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, b] {
    const Mat& g = grd(out.idx);
    grd(a.idx) += g;
    grd(b.idx) -= g;
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Var out = push_owned(val(a.idx).cwiseProduct(val(b.idx)));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, b] {
    const Mat& g = grd(out.idx);
    grd(a.idx) += val(b.idx).cwiseProduct(g);
    grd(b.idx) += val(a.idx).cwiseProduct(g);
  };
  return out;
}

Var Tape::scale(Var a, double c) {
  Var out = push_owned(val(a.idx) * c);
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, c] {
    grd(a.idx) += c * grd(out.idx);
  };
  return out;
}

Var Tape::scale_by(Var s, Var a) {
  require(val(s.idx).rows() == 1 && val(s.idx).cols() == 1, "scale_by: scalar must be 1x1");
  Var out = push_owned(val(s.idx)(0, 0) * val(a.idx));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, s, a] {
    const Mat& g = grd(out.idx);
    grd(s.idx)(0, 0) += val(a.idx).cwiseProduct(g).sum();
    grd(a.idx) += val(s.idx)(0, 0) * g;
  };
  return out;
}

Var Tape::matvec(Var w, Var x) {
  check_vector(x, "matvec");
  require(val(w.idx).cols() == val(x.idx).rows(), "matvec: inner dimension mismatch");
  Var out = push_owned(val(w.idx) * val(x.idx));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, w, x] {
    const Mat& g = grd(out.idx);
    grd(w.idx) += g * val(x.idx).transpose();
    grd(x.idx) += val(w.idx).transpose() * g;
  };
  return out;
}

Var Tape::concat(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat: no parts");
  long total = 0;
  for (Var p : parts) {
    check_vector(p, "concat");
    total += val(p.idx).rows();
  }
  Mat v(total, 1);
  long at = 0;
  for (Var p : parts) {
    const long r = val(p.idx).rows();
    v.block(at, 0, r, 1) = val(p.idx);
    at += r;
  }
  Var out = push_owned(std::move(v));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, parts] {
    const Mat& g = grd(out.idx);
    long pos = 0;
    for (Var p : parts) {
      const long r = val(p.idx).rows();
      grd(p.idx) += g.block(pos, 0, r, 1);
      pos += r;
    }
  };
  return out;
}

Var Tape::rows(Var a, int start, int count) {
  check_vector(a, "rows");
  require(start >= 0 && count >= 1 && start + count <= val(a.idx).rows(),
          "rows: block out of range");
  Var out = push_owned(val(a.idx).block(start, 0, count, 1));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, start, count] {
    grd(a.idx).block(start, 0, count, 1) += grd(out.idx);
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  Mat y = (1.0 / (1.0 + (-val(a.idx).array()).exp())).matrix();
  Var out = push_owned(std::move(y));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a] {
    const Mat& yv = val(out.idx);
    grd(a.idx).array() += yv.array() * (1.0 - yv.array()) * grd(out.idx).array();
  };
  return out;
}

Var Tape::tanh(Var a) {
  Var out = push_owned(val(a.idx).array().tanh().matrix());
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a] {
    const Mat& yv = val(out.idx);
    grd(a.idx).array() +=
        tanh_backward_scale() * (1.0 - yv.array().square()) * grd(out.idx).array();
  };
  return out;
}

Var Tape::softmax(Var a) {
  check_vector(a, "softmax");
  const Mat& z = val(a.idx);
  Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  Mat y = (e / e.sum()).matrix();
  Var out = push_owned(std::move(y));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a] {
    const Mat& yv = val(out.idx);
    const Mat& g = grd(out.idx);
    const double d = yv.cwiseProduct(g).sum();
    grd(a.idx).array() += yv.array() * (g.array() - d);
  };
  return out;
}

Var Tape::dot(Var a, Var b) {
  check_vector(a, "dot");
  check_same_shape(a, b, "dot");
  Mat v(1, 1);
  v(0, 0) = val(a.idx).col(0).dot(val(b.idx).col(0));
  Var out = push_owned(std::move(v));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a, b] {
    const double g = grd(out.idx)(0, 0);
    grd(a.idx) += g * val(b.idx);
    grd(b.idx) += g * val(a.idx);
  };
  return out;
}

Var Tape::sum(Var a) {
  Mat v(1, 1);
  v(0, 0) = val(a.idx).sum();
  Var out = push_owned(std::move(v));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, a] {
    grd(a.idx).array() += grd(out.idx)(0, 0);
  };
  return out;
}

Var Tape::weighted_sum(Var w, const std::vector<Var>& values) {
  check_vector(w, "weighted_sum");
  require(static_cast<long>(values.size()) == val(w.idx).rows(),
          "weighted_sum: weight/value count mismatch");
  require(!values.empty(), "weighted_sum: no values");
  for (Var v : values) check_same_shape(values.front(), v, "weighted_sum");
  Mat acc = Mat::Zero(val(values.front().idx).rows(), 1);
  for (std::size_t i = 0; i < values.size(); ++i)
    acc += val(w.idx)(static_cast<long>(i), 0) * val(values[i].idx);
  Var out = push_owned(std::move(acc));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, w, values] {
    const Mat& g = grd(out.idx);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const long li = static_cast<long>(i);
      grd(w.idx)(li, 0) += val(values[i].idx).cwiseProduct(g).sum();
      grd(values[i].idx) += val(w.idx)(li, 0) * g;
    }
  };
  return out;
}

Var Tape::cross_entropy(Var logits, int target) {
  check_vector(logits, "cross_entropy");
  const Mat& z = val(logits.idx);
  require(target >= 0 && target < z.rows(), "cross_entropy: target out of range");
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  Mat v(1, 1);
  v(0, 0) = lse - z(target, 0);
  Var out = push_owned(std::move(v));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, logits, target] {
    const Mat& z2 = val(logits.idx);
    const double m2 = z2.maxCoeff();
    Eigen::ArrayXd p = (z2.array() - m2).exp();
    p /= p.sum();
    const double g = grd(out.idx)(0, 0);
    grd(logits.idx).array() += g * p;
    grd(logits.idx)(target, 0) -= g;
  };
  return out;
}

Var Tape::binary_cross_entropy(Var logit, double target) {
  require(val(logit.idx).rows() == 1 && val(logit.idx).cols() == 1,
          "binary_cross_entropy: logit must be 1x1");
  require(target == 0.0 || target == 1.0, "binary_cross_entropy: target must be 0 or 1");
  const double x = val(logit.idx)(0, 0);
  Mat v(1, 1);
  v(0, 0) = std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
  Var out = push_owned(std::move(v));
  nodes_[static_cast<std::size_t>(out.idx)].back = [this, out, logit, target] {
    const double x2 = val(logit.idx)(0, 0);
    const double s = 1.0 / (1.0 + std::exp(-x2));
    grd(logit.idx)(0, 0) += grd(out.idx)(0, 0) * (s - target);
  };
  return out;
}

const Mat& Tape::value(Var v) const { return val(v.idx); }

const Mat& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.idx)];
  return n.param ? n.param->grad : n.grad;
}

double Tape::scalar(Var v) const {
  const Mat& m = val(v.idx);
  require(m.rows() == 1 && m.cols() == 1, "scalar: node is not 1x1");
  return m(0, 0);
}

void Tape::backward(Var root) {
  require(root.idx >= 0 && root.idx < static_cast<int>(nodes_.size()), "backward: bad root");
  const Mat& v = val(root.idx);
  if (v.rows() != 1 || v.cols() != 1) throw NonScalarRoot("backward: root is not a scalar");
  // Interior node grads are per-sweep scratch; only leaves (constants and
  // params, which have no back rule) accumulate across repeated calls.
  for (int i = 0; i <= root.idx; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && !n.param) n.grad.setZero();
  }
  grd(root.idx)(0, 0) += 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back();
  }
}

LstmWeights lstm_weights(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                         Rng& rng) {
  LstmWeights w;
  w.w = store.dense(prefix + ".w", 4 * hidden, in_dim, rng);
  w.u = store.dense(prefix + ".u", 4 * hidden, hidden, rng);
  w.b = store.zeros(prefix + ".b", 4 * hidden, 1);
  w.hidden = hidden;
  return w;
}

LstmState lstm_zero_state(Tape& t, int hidden) {
  return {t.constant(Mat::Zero(hidden, 1)), t.constant(Mat::Zero(hidden, 1))};
}

LstmState lstm_cell(Tape& t, const LstmWeights& w, Var x, const LstmState& prev) {
  const int h = w.hidden;
  Var z = t.add(t.add(t.matvec(t.leaf(w.w), x), t.matvec(t.leaf(w.u), prev.h)), t.leaf(w.b));
  Var gi = t.sigmoid(t.rows(z, 0, h));
  Var gf = t.sigmoid(t.rows(z, h, h));
  Var gc = t.tanh(t.rows(z, 2 * h, h));
  Var go = t.sigmoid(t.rows(z, 3 * h, h));
  Var c = t.add(t.mul(gf, prev.c), t.mul(gi, gc));
  Var hh = t.mul(go, t.tanh(c));
  return {hh, c};
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double lr_t = cfg_.decay_is_lr ? cfg_.lr / (1.0 + cfg_.decay * static_cast<double>(t_))
                                       : cfg_.lr;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store.params()) {
    if (!cfg_.decay_is_lr && cfg_.decay > 0.0) p->value -= lr_t * cfg_.decay * p->value;
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * p->grad;
    p->v.array() = cfg_.beta2 * p->v.array() + (1.0 - cfg_.beta2) * p->grad.array().square();
    p->value.array() -= lr_t * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + cfg_.eps);
    p->grad.setZero();
  }
}

GradCheckReport gradient_check(ParamStore& store, const std::function<Var(Tape&)>& builder,
                               double eps, double tol) {
  store.zero_grad();
  {
    Tape t;
    Var root = builder(t);
    t.backward(root);
  }
  std::vector<Mat> analytic;
  analytic.reserve(store.params().size());
  for (auto& p : store.params()) analytic.push_back(p->grad);
  store.zero_grad();

  auto eval = [&]() {
    Tape t;
    return t.scalar(builder(t));
  };

  GradCheckReport report;
  report.tol = tol;
  for (std::size_t pi = 0; pi < store.params().size(); ++pi) {
    Param& p = *store.params()[pi];
    double worst = 0.0;
    for (long r = 0; r < p.value.rows(); ++r) {
      for (long c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + eps;
        const double up = eval();
        p.value(r, c) = saved - eps;
        const double down = eval();
        p.value(r, c) = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double adg = analytic[pi](r, c);
        const double rel = std::abs(adg - fd) / std::max({std::abs(adg), std::abs(fd), 1e-8});
        worst = std::max(worst, rel);
      }
    }
    report.entries.push_back({p.name, worst});
    report.worst = std::max(report.worst, worst);
  }
  report.pass = report.worst <= tol;
  return report;
}

namespace {

constexpr char kMagic[8] = {'N', 'L', '2', 'F', 'O', 'L', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t get_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  std::memcpy(&v, bytes.data() + at, 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& meta_json) {
  nlohmann::json header;
  header["meta"] = meta_json.empty() ? nlohmann::json::object()
                                     : nlohmann::json::parse(meta_json);
  nlohmann::json arrays = nlohmann::json::array();
  for (auto& p : store.params()) {
    arrays.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  header["arrays"] = std::move(arrays);
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (auto& p : store.params()) {
    for (long r = 0; r < p->value.rows(); ++r) {
      for (long c = 0; c < p->value.cols(); ++c) {
        char buf[8];
        const double v = p->value(r, c);
        std::memcpy(buf, &v, 8);
        out.append(buf, 8);
      }
    }
  }
  write_file(path, out);
}

std::string load_checkpoint(const std::string& path, ParamStore& store) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + header_len) throw std::runtime_error("truncated checkpoint header");
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(16, header_len));

  store.clear();
  std::size_t at = 16 + header_len;
  for (const auto& a : header.at("arrays")) {
    const long rows = a.at("rows").get<long>();
    const long cols = a.at("cols").get<long>();
    const std::size_t need = static_cast<std::size_t>(rows * cols) * 8;
    if (bytes.size() < at + need) throw std::runtime_error("truncated checkpoint data");
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) {
        double v = 0.0;
        std::memcpy(&v, bytes.data() + at, 8);
        at += 8;
        m(r, c) = v;
      }
    }
    store.raw(a.at("name").get<std::string>(), std::move(m));
  }
  return header.at("meta").dump();
}

}  // namespace nl2fol::ad
