#include "oracle.hpp"

#include <cmath>

namespace oracle {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nl2fol::corpus::Example;
using nl2fol::lin::Category;
using nl2fol::model::Model;
using nl2fol::model::Variant;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VectorXd softmax(const VectorXd& z) {
  VectorXd e = z.array().exp();
  return e / e.sum();
}

int cat_index(Category c) {
  switch (c) {
    case Category::U: return 0;
    case Category::B: return 1;
    case Category::V: return 2;
    case Category::S: return 3;
  }
  return -1;
}

struct Lstm {
  MatrixXd w, u;
  VectorXd b;
  int hidden;

  void step(const VectorXd& x, VectorXd& h, VectorXd& c) const {
    VectorXd z = w * x + u * h + b;
    VectorXd nh(hidden), nc(hidden);
    for (int k = 0; k < hidden; ++k) {
      const double gi = sigmoid(z(k));
      const double gf = sigmoid(z(hidden + k));
      const double gc = std::tanh(z(2 * hidden + k));
      const double go = sigmoid(z(3 * hidden + k));
      nc(k) = gf * c(k) + gi * gc;
      nh(k) = go * std::tanh(nc(k));
    }
    h = nh;
    c = nc;
  }
};

struct Pass {
  const Model& m;
  const Example& ex;
  std::vector<VectorXd> enc;
  std::vector<VectorXd> dec_states;
  std::vector<VectorXd> self_ctx;
  Losses out;

  explicit Pass(const Model& model, const Example& example) : m(model), ex(example) {}

  Lstm lstm(const std::string& prefix, int hidden) const {
    return {m.params().at(prefix + ".w")->value, m.params().at(prefix + ".u")->value,
            m.params().at(prefix + ".b")->value.col(0), hidden};
  }

  void encode() {
    const auto& cfg = m.config();
    const int half = cfg.hidden / 2;
    const MatrixXd& emb = m.params().at("embed.input")->value;
    const int n = static_cast<int>(ex.input_ids.size());
    const Lstm fw = lstm("enc.fwd", half), bw = lstm("enc.bwd", half);

    std::vector<VectorXd> fwd(n), bwd(n);
    VectorXd h = VectorXd::Zero(half), c = VectorXd::Zero(half);
    for (int i = 0; i < n; ++i) {
      fw.step(emb.row(ex.input_ids[i]).transpose(), h, c);
      fwd[i] = h;
    }
    h.setZero();
    c.setZero();
    for (int i = n - 1; i >= 0; --i) {
      bw.step(emb.row(ex.input_ids[i]).transpose(), h, c);
      bwd[i] = h;
    }
    enc.resize(n);
    for (int i = 0; i < n; ++i) {
      enc[i].resize(cfg.hidden);
      enc[i] << fwd[i], bwd[i];
    }
  }

  VectorXd decoder_input(int step) const {
    const auto& cfg = m.config();
    const auto& v = m.vocabs();
    const int pe = cfg.pred_embed;
    const int vv = v.variable.size();
    const int se = cfg.scope_embed;
    VectorXd x = VectorXd::Zero(2 * pe + vv + se + v.category.size());
    if (step == 0) {
      x(2 * pe + vv + se + v.category.id(nl2fol::corpus::kStart)) = 1.0;
      return x;
    }
    const Category cat = ex.target.categories[step - 1];
    const int id = ex.target_ids[step - 1];
    if (cat == Category::U)
      x.segment(0, pe) = m.params().at("embed.unary")->value.row(id).transpose();
    else if (cat == Category::B)
      x.segment(pe, pe) = m.params().at("embed.binary")->value.row(id).transpose();
    else if (cat == Category::V)
      x(2 * pe + id) = 1.0;
    else
      x.segment(2 * pe + vv, se) = m.params().at("embed.scope")->value.row(id).transpose();
    x(2 * pe + vv + se + cat_index(cat)) = 1.0;
    return x;
  }

  VectorXd attention_context(const VectorXd& q, const std::vector<VectorXd>& keys) const {
    VectorXd logits(keys.size());
    for (std::size_t j = 0; j < keys.size(); ++j) logits(static_cast<long>(j)) = q.dot(keys[j]);
    VectorXd w = softmax(logits);
    VectorXd ctx = VectorXd::Zero(keys.front().size());
    for (std::size_t j = 0; j < keys.size(); ++j) ctx += w(static_cast<long>(j)) * keys[j];
    return ctx;
  }

  int merged_index(Category cat, int id) const {
    const auto& v = m.vocabs();
    if (cat == Category::U) return id;
    if (cat == Category::B) return v.unary.size() + id;
    if (cat == Category::V) return v.unary.size() + v.binary.size() + id;
    return v.unary.size() + v.binary.size() + v.variable.size() + id;
  }

  void run() {
    const auto& cfg = m.config();
    const Variant var = cfg.variant;
    const bool sep = nl2fol::model::separate_heads(var);
    const bool self = nl2fol::model::self_attention(var);
    const bool ali = nl2fol::model::alignment(var);

    encode();
    const Lstm dl = lstm("dec", cfg.hidden);
    VectorXd h = VectorXd::Zero(cfg.hidden), c = VectorXd::Zero(cfg.hidden);
    std::vector<VectorXd> projs;

    const std::size_t n = ex.target.size();
    for (std::size_t i = 0; i < n; ++i) {
      dl.step(decoder_input(static_cast<int>(i)), h, c);
      const VectorXd c_e = attention_context(h, enc);

      VectorXd c_d = VectorXd::Zero(cfg.hidden);
      if (self && !dec_states.empty()) c_d = attention_context(h, dec_states);
      if (self) self_ctx.push_back(c_d);

      const Category cat = ex.target.categories[i];
      const int tid = ex.target_ids[i];
      const bool align_here = ali && (var == Variant::VanillaAlign || cat == Category::V);

      VectorXd h_mix = h;
      double gate_logit = 0.0;
      VectorXd gamma;
      if (ali) {
        const VectorXd proj = m.params().at("align.proj")->value * h;
        if (align_here) {
          gate_logit = m.params().at("align.gate")->value.row(0).dot(h);
          const double gate = sigmoid(gate_logit);
          VectorXd c_a = VectorXd::Zero(cfg.hidden);
          if (!projs.empty()) {
            VectorXd logits(projs.size());
            for (std::size_t j = 0; j < projs.size(); ++j)
              logits(static_cast<long>(j)) = proj.dot(projs[j]);
            gamma = softmax(logits);
            for (std::size_t j = 0; j < projs.size(); ++j)
              c_a += gamma(static_cast<long>(j)) * projs[j];
          }
          h_mix = gate * c_a + (1.0 - gate) * h;
        }
        projs.push_back(proj);
      }

      auto head_in = [&](const VectorXd& base) {
        VectorXd r(base.size() + (cfg.heads_use_context ? cfg.hidden : 0) +
                   (self ? cfg.hidden : 0));
        int at = 0;
        r.segment(at, base.size()) = base;
        at += static_cast<int>(base.size());
        if (cfg.heads_use_context) {
          r.segment(at, cfg.hidden) = c_e;
          at += cfg.hidden;
        }
        if (self) r.segment(at, cfg.hidden) = c_d;
        return r;
      };

      if (sep) {
        const VectorXd base = head_in(h);
        const VectorXd tprobs =
            softmax(m.params().at("head.category")->value * base);
        out.aux += -std::log(tprobs(cat_index(cat)));
        const char* head_name = cat == Category::U   ? "head.unary"
                                : cat == Category::B ? "head.binary"
                                : cat == Category::V ? "head.variable"
                                                     : "head.scope";
        const VectorXd in = (cat == Category::V && align_here) ? head_in(h_mix) : base;
        const VectorXd probs = softmax(m.params().at(head_name)->value * in);
        out.ce += -std::log(probs(tid));
      } else {
        const VectorXd probs =
            softmax(m.params().at("head.merged")->value * head_in(h_mix));
        out.ce += -std::log(probs(merged_index(cat, tid)));
      }

      if (ali && cat == Category::V) {
        const auto& at = ex.target.align[i];
        const double s = sigmoid(gate_logit);
        const double y = at.aligned ? 1.0 : 0.0;
        out.dec += -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
        if (at.aligned) out.pos += -std::log(gamma(at.position));
      }

      dec_states.push_back(h);
    }

    const double inv = 1.0 / static_cast<double>(n);
    out.ce *= inv;
    out.total = out.ce;
    if (sep) {
      out.aux *= inv;
      out.total += out.aux;
    } else {
      out.aux = 0.0;
    }
    if (ali) {
      out.dec *= inv;
      out.pos *= inv;
      out.total += out.dec + out.pos;
    } else {
      out.dec = out.pos = 0.0;
    }
  }
};

}  // namespace

Losses losses(const Model& m, const Example& ex) {
  Pass p(m, ex);
  p.run();
  return p.out;
}

std::vector<VectorXd> self_contexts(const Model& m, const Example& ex) {
  Pass p(m, ex);
  p.run();
  return p.self_ctx;
}

}  // namespace oracle
