#ifndef NL2FOL_AUTODIFF_HPP
#define NL2FOL_AUTODIFF_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nl2fol/util.hpp"

namespace nl2fol::ad {

using Mat = Eigen::MatrixXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonScalarRoot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named trainable array with its gradient and Adam moment buffers.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;

  Param(std::string n, Mat val)
      : name(std::move(n)),
        value(std::move(val)),
        grad(Mat::Zero(value.rows(), value.cols())),
        m(Mat::Zero(value.rows(), value.cols())),
        v(Mat::Zero(value.rows(), value.cols())) {}
};

// Owns parameters in creation order (which fixes init and update order).
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  // Xavier-uniform init: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
  Param* dense(const std::string& name, int rows, int cols, Rng& rng);
  Param* zeros(const std::string& name, int rows, int cols);
  // Adopts an explicit value (checkpoint loading, tests).
  Param* raw(const std::string& name, Mat value);

  Param* find(const std::string& name) const;  // nullptr when absent
  Param* at(const std::string& name) const;    // throws when absent
  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }

  void zero_grad();
  double grad_norm() const;
  void clip_grad_norm(double max_norm);
  std::size_t scalar_count() const;
  void clear();

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, Param*> index_;
};

// Handle into a Tape's node list.
struct Var {
  int idx = -1;
};

// Reverse-mode tape. Nodes are appended in forward (topological) order;
// backward() walks them in reverse. Leaves bound to Params read the Param's
// value and send gradient straight into Param::grad, which therefore
// accumulates across tapes until ParamStore::zero_grad.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat v);
  Var leaf(Param* p);
  // One row of a parameter table as a column vector (embedding lookup).
  Var lookup(Param* table, int row);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var scale_by(Var s, Var a);  // s is 1x1; explicit scalar-times-array op
  Var matvec(Var w, Var x);
  Var concat(const std::vector<Var>& parts);       // stacked column vectors
  Var rows(Var a, int start, int count);           // row block of a column vector
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softmax(Var a);  // column vector, max-shifted
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var weighted_sum(Var w, const std::vector<Var>& values);
  // logsumexp(logits) - logits[target]; gradient is softmax - onehot.
  Var cross_entropy(Var logits, int target);
  // Sigmoid BCE on a 1x1 logit in softplus form; gradient is sigma(x) - t.
  Var binary_cross_entropy(Var logit, double target);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  double scalar(Var v) const;  // value of a 1x1 node

  // Seeds d(root)/d(root) = 1 and runs the reverse sweep. Root must be 1x1.
  // Node gradients are per-call; Param gradients accumulate.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;             // owned value (unused when param is set)
    Mat grad;
    Param* param = nullptr;
    std::function<void()> back;
  };

  Var push_owned(Mat v);
  const Mat& val(int i) const;
  Mat& grd(int i);
  void check_same_shape(Var a, Var b, const char* op) const;
  void check_vector(Var a, const char* op) const;

  std::vector<Node> nodes_;
};

// Fused-gate LSTM weights, gate rows ordered [input; forget; cell; output].
struct LstmWeights {
  Param* w = nullptr;  // (4h x in)
  Param* u = nullptr;  // (4h x h)
  Param* b = nullptr;  // (4h x 1)
  int hidden = 0;
};

struct LstmState {
  Var h;
  Var c;
};

LstmWeights lstm_weights(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                         Rng& rng);
LstmState lstm_zero_state(Tape& t, int hidden);
LstmState lstm_cell(Tape& t, const LstmWeights& w, Var x, const LstmState& prev);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 1e-4;
  bool decay_is_lr = false;  // false: decoupled weight decay; true: lr/(1 + decay*t)
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Bias-corrected Adam update on every param, then zeroed gradients.
  void step(ParamStore& store);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central-difference check of d(builder)/d(param) for every scalar in the
// store. builder must rebuild the same scalar loss from current param values.
GradCheckReport gradient_check(ParamStore& store, const std::function<Var(Tape&)>& builder,
                               double eps = 1e-5, double tol = 1e-4);

// Negative-control hook: a scale other than 1.0 makes the tanh backward rule
// deliberately wrong so checker failures can be demonstrated. Process-global;
// reset to 1.0 after use.
double tanh_backward_scale();
void set_tanh_backward_scale(double s);

// Checkpoint container: magic "NL2FOLCK", u32 format version, u32 header
// length, JSON header (array names/shapes plus caller metadata), then raw
// little-endian float64 data per array in header order. Bit-exact round trip.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& meta_json);
// Replaces the store's contents; returns the stored metadata JSON text.
std::string load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace nl2fol::ad

#endif  // NL2FOL_AUTODIFF_HPP
