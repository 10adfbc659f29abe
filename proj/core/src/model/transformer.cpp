#include "patchlab/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

constexpr double kLnEps = 1e-5;
constexpr int kSiteCount = 6;

using Vec = Eigen::VectorXd;

struct Write {
  Address addr;
  const double* data = nullptr;
  WriteMode mode = WriteMode::kReplace;
};

int bucket_of(int layer, Site site) { return layer * kSiteCount + static_cast<int>(site); }

// Per-sequence resolved writes and probes, bucketed by (layer, site).
struct SequencePlan {
  std::vector<std::vector<Write>> writes;
  std::vector<std::vector<Address>> probes;
  bool has_writes = false;
};

SequencePlan plan_sequence(const Weights& w, int length, const SlotMap& slots,
                           std::span<const InterventionSpec> interventions, std::span<const Probe> probes) {
  const auto& cfg = w.config;
  SequencePlan plan;
  plan.writes.resize(static_cast<std::size_t>(cfg.n_layers * kSiteCount));
  plan.probes.resize(plan.writes.size());

  std::set<Address> seen;
  for (const auto& spec : interventions) {
    const auto addrs = resolve(spec.key, spec.channels, slots, cfg);
    require(addrs.size() == spec.source.size(), ErrorCode::kInvalidArgument,
            "intervention at " + describe(spec.key) + " has " + std::to_string(spec.source.size()) +
                " source vectors for " + std::to_string(addrs.size()) + " addresses");
    for (std::size_t i = 0; i < addrs.size(); ++i) {
      const auto& a = addrs[i];
      require(a.position < length, ErrorCode::kAddress,
              "intervention position " + std::to_string(a.position) + " beyond sequence length");
      require(static_cast<int>(spec.source[i].size()) == site_width(a.site, cfg), ErrorCode::kInvalidArgument,
              "intervention source width mismatch at " + describe(spec.key));
      require(spec.source[i].all_finite(), ErrorCode::kNumericDomain, "non-finite intervention source");
      require(seen.insert(a).second, ErrorCode::kConflict,
              "two interventions write the same address (" + describe(spec.key) + ")");
      plan.writes[static_cast<std::size_t>(bucket_of(a.layer, a.site))].push_back(
          {a, spec.source[i].data().data(), spec.mode});
      plan.has_writes = true;
    }
  }
  for (const auto& probe : probes) {
    for (const auto& a : resolve(probe.key, probe.channels, slots, cfg)) {
      require(a.position < length, ErrorCode::kAddress, "probe position beyond sequence length");
      plan.probes[static_cast<std::size_t>(bucket_of(a.layer, a.site))].push_back(a);
    }
  }
  return plan;
}

struct LnTrace {
  RowMatrix xhat;
  Vec rstd;
};

RowMatrix layer_norm(const RowMatrix& x, const Tensor& gain, const Tensor& bias, LnTrace& trace) {
  const auto n = x.rows();
  const auto d = x.cols();
  trace.xhat.resize(n, d);
  trace.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    trace.rstd(i) = rstd;
    trace.xhat.row(i) = (x.row(i).array() - mu) * rstd;
  }
  RowMatrix y = trace.xhat.array().rowwise() * gain.vec().transpose().array();
  y.rowwise() += bias.vec().transpose();
  return y;
}

// Returns d loss / d x and accumulates gain/bias gradients.
RowMatrix layer_norm_backward(const RowMatrix& dy, const Tensor& gain, const LnTrace& trace, Tensor* dgain,
                              Tensor* dbias) {
  if (dgain) dgain->vec() += (dy.array() * trace.xhat.array()).colwise().sum().transpose().matrix();
  if (dbias) dbias->vec() += dy.colwise().sum().transpose();
  RowMatrix dxhat = dy.array().rowwise() * gain.vec().transpose().array();
  RowMatrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = (dxhat.row(i).array() * trace.xhat.row(i).array()).mean();
    dx.row(i) = trace.rstd(i) * (dxhat.row(i).array() - m1 - trace.xhat.row(i).array() * m2);
  }
  return dx;
}

constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

void add_bias(RowMatrix& m, const Tensor& b) { m.rowwise() += b.vec().transpose(); }

struct LayerTrace {
  RowMatrix x_in;
  LnTrace ln1;
  RowMatrix h1, q, k, v;
  std::vector<RowMatrix> probs;  // [batch * heads], each T x T
  RowMatrix z, attn_out, x_mid;
  LnTrace ln2;
  RowMatrix h2, u, act, mlp_out;
};

// One batched pass over B equal-length sequences stacked as B*T rows.
class BatchPass {
 public:
  BatchPass(const Weights& w, int batch, int length) : w_(w), batch_(batch), length_(length) {
    layers_.resize(w.layers.size());
  }

  void set_plans(std::vector<const SequencePlan*> plans) { plans_ = std::move(plans); }

  RowMatrix embed(std::span<const std::vector<int>* const> tokens,
                  std::span<const std::vector<InputOverride>* const> overrides) {
    const auto& cfg = w_.config;
    require(length_ <= cfg.max_positions, ErrorCode::kCapacity,
            "sequence length " + std::to_string(length_) + " exceeds max_positions");
    RowMatrix x(batch_ * length_, cfg.d_model);
    const auto tok = w_.tok_emb.mat();
    const auto pos = w_.pos_emb.mat();
    for (int b = 0; b < batch_; ++b) {
      const auto& seq = *tokens[static_cast<std::size_t>(b)];
      for (int t = 0; t < length_; ++t) {
        const int id = seq[static_cast<std::size_t>(t)];
        require(id >= 0 && id < cfg.vocab_size, ErrorCode::kInvalidArgument,
                "token id " + std::to_string(id) + " outside vocabulary");
        x.row(b * length_ + t) = tok.row(id) + pos.row(t);
      }
      if (!overrides.empty() && overrides[static_cast<std::size_t>(b)] != nullptr) {
        for (const auto& ov : *overrides[static_cast<std::size_t>(b)]) {
          require(ov.position >= 0 && ov.position < length_, ErrorCode::kAddress, "input override out of range");
          require(static_cast<int>(ov.vector.size()) == cfg.d_model, ErrorCode::kInvalidArgument,
                  "input override width mismatch");
          const int row = b * length_ + ov.position;
          if (ov.replace_token) {
            x.row(row) = ov.vector.vec().transpose() + pos.row(ov.position);
          } else {
            x.row(row) += ov.vector.vec().transpose();
          }
        }
      }
    }
    return x;
  }

  RowMatrix run(RowMatrix x) {
    const auto& cfg = w_.config;
    const int d_head = cfg.d_head;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const auto& L = w_.layers[static_cast<std::size_t>(l)];
      auto& tr = layers_[static_cast<std::size_t>(l)];

      hook(l, Site::kResidBlock, x);
      tr.x_in = x;

      tr.h1 = layer_norm(tr.x_in, L.ln1_gain, L.ln1_bias, tr.ln1);
      tr.q = tr.h1 * L.w_q.mat();
      add_bias(tr.q, L.b_q);
      tr.k = tr.h1 * L.w_k.mat();
      add_bias(tr.k, L.b_k);
      tr.v = tr.h1 * L.w_v.mat();
      add_bias(tr.v, L.b_v);
      hook(l, Site::kQ, tr.q);
      hook(l, Site::kK, tr.k);
      hook(l, Site::kV, tr.v);

      tr.z = RowMatrix::Zero(tr.q.rows(), tr.q.cols());
      tr.probs.assign(static_cast<std::size_t>(batch_ * cfg.n_heads), RowMatrix());
      for (int b = 0; b < batch_; ++b) {
        const int r0 = b * length_;
        for (int h = 0; h < cfg.n_heads; ++h) {
          const int c0 = h * d_head;
          RowMatrix scores = tr.q.block(r0, c0, length_, d_head) * tr.k.block(r0, c0, length_, d_head).transpose();
          scores *= scale;
          RowMatrix p = RowMatrix::Zero(length_, length_);
          for (int i = 0; i < length_; ++i) {
            const double mx = scores.row(i).head(i + 1).maxCoeff();
            double total = 0.0;
            for (int j = 0; j <= i; ++j) {
              p(i, j) = std::exp(scores(i, j) - mx);
              total += p(i, j);
            }
            p.row(i).head(i + 1) /= total;
          }
          tr.z.block(r0, c0, length_, d_head) = p * tr.v.block(r0, c0, length_, d_head);
          tr.probs[static_cast<std::size_t>(b * cfg.n_heads + h)] = std::move(p);
        }
      }
      tr.attn_out = tr.z * L.w_o.mat();
      add_bias(tr.attn_out, L.b_o);
      hook(l, Site::kResidAttn, tr.attn_out);
      tr.x_mid = tr.x_in + tr.attn_out;

      tr.h2 = layer_norm(tr.x_mid, L.ln2_gain, L.ln2_bias, tr.ln2);
      tr.u = tr.h2 * L.w_in.mat();
      add_bias(tr.u, L.b_in);
      tr.act = tr.u.unaryExpr([](double u) { return gelu(u); });
      tr.mlp_out = tr.act * L.w_out.mat();
      add_bias(tr.mlp_out, L.b_out);
      hook(l, Site::kResidMlp, tr.mlp_out);
      x = tr.x_mid + tr.mlp_out;
    }
    hf_ = layer_norm(x, w_.lnf_gain, w_.lnf_bias, lnf_);
    return hf_ * w_.unembed.mat();
  }

  // Reverse pass from d loss / d logits. Returns d loss / d x0 and fills
  // parameter gradients when `grads` is non-null.
  RowMatrix backward(const RowMatrix& dlogits, Weights* grads) {
    const auto& cfg = w_.config;
    const int d_head = cfg.d_head;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

    if (grads) grads->unembed.mat() += hf_.transpose() * dlogits;
    RowMatrix dhf = dlogits * w_.unembed.mat().transpose();
    RowMatrix dx = layer_norm_backward(dhf, w_.lnf_gain, lnf_, grads ? &grads->lnf_gain : nullptr,
                                       grads ? &grads->lnf_bias : nullptr);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
      const auto& L = w_.layers[static_cast<std::size_t>(l)];
      const auto& tr = layers_[static_cast<std::size_t>(l)];
      LayerWeights* G = grads ? &grads->layers[static_cast<std::size_t>(l)] : nullptr;

      // MLP sublayer: x_out = x_mid + mlp(LN2(x_mid)).
      if (G) {
        G->w_out.mat() += tr.act.transpose() * dx;
        G->b_out.vec() += dx.colwise().sum().transpose();
      }
      RowMatrix du = (dx * L.w_out.mat().transpose()).array() *
                     tr.u.unaryExpr([](double u) { return gelu_grad(u); }).array();
      if (G) {
        G->w_in.mat() += tr.h2.transpose() * du;
        G->b_in.vec() += du.colwise().sum().transpose();
      }
      RowMatrix dh2 = du * L.w_in.mat().transpose();
      RowMatrix dx_mid = dx + layer_norm_backward(dh2, L.ln2_gain, tr.ln2, G ? &G->ln2_gain : nullptr,
                                                  G ? &G->ln2_bias : nullptr);

      // Attention sublayer: x_mid = x_in + attn(LN1(x_in)).
      if (G) {
        G->w_o.mat() += tr.z.transpose() * dx_mid;
        G->b_o.vec() += dx_mid.colwise().sum().transpose();
      }
      RowMatrix dz = dx_mid * L.w_o.mat().transpose();
      RowMatrix dq = RowMatrix::Zero(dz.rows(), dz.cols());
      RowMatrix dk = RowMatrix::Zero(dz.rows(), dz.cols());
      RowMatrix dv = RowMatrix::Zero(dz.rows(), dz.cols());
      for (int b = 0; b < batch_; ++b) {
        const int r0 = b * length_;
        for (int h = 0; h < cfg.n_heads; ++h) {
          const int c0 = h * d_head;
          const RowMatrix& p = tr.probs[static_cast<std::size_t>(b * cfg.n_heads + h)];
          const auto dz_blk = dz.block(r0, c0, length_, d_head);
          RowMatrix dp = dz_blk * tr.v.block(r0, c0, length_, d_head).transpose();
          dv.block(r0, c0, length_, d_head) = p.transpose() * dz_blk;
          RowMatrix ds = p.array() * (dp.colwise() - (p.array() * dp.array()).rowwise().sum().matrix()).array();
          ds *= scale;
          dq.block(r0, c0, length_, d_head) = ds * tr.k.block(r0, c0, length_, d_head);
          dk.block(r0, c0, length_, d_head) = ds.transpose() * tr.q.block(r0, c0, length_, d_head);
        }
      }
      if (G) {
        G->w_q.mat() += tr.h1.transpose() * dq;
        G->b_q.vec() += dq.colwise().sum().transpose();
        G->w_k.mat() += tr.h1.transpose() * dk;
        G->b_k.vec() += dk.colwise().sum().transpose();
        G->w_v.mat() += tr.h1.transpose() * dv;
        G->b_v.vec() += dv.colwise().sum().transpose();
      }
      RowMatrix dh1 = dq * L.w_q.mat().transpose() + dk * L.w_k.mat().transpose() + dv * L.w_v.mat().transpose();
      dx = dx_mid + layer_norm_backward(dh1, L.ln1_gain, tr.ln1, G ? &G->ln1_gain : nullptr,
                                        G ? &G->ln1_bias : nullptr);
    }
    return dx;
  }


  std::vector<ActivationCache> caches;

 private:
  void hook(int layer, Site site, RowMatrix& m) {
    if (plans_.empty()) return;
    const auto bucket = static_cast<std::size_t>(bucket_of(layer, site));
    const int d_head = w_.config.d_head;
    for (int b = 0; b < batch_; ++b) {
      const SequencePlan* plan = plans_[static_cast<std::size_t>(b)];
      if (plan == nullptr) continue;
      for (const auto& wr : plan->writes[bucket]) {
        const int row = b * length_ + wr.addr.position;
        const int c0 = wr.addr.head < 0 ? 0 : wr.addr.head * d_head;
        const int width = wr.addr.head < 0 ? static_cast<int>(m.cols()) : d_head;
        const ConstVectorMap src(wr.data, width);
        if (wr.mode == WriteMode::kReplace) {
          m.block(row, c0, 1, width) = src.transpose();
        } else {
          m.block(row, c0, 1, width) += src.transpose();
        }
      }
      for (const auto& a : plan->probes[bucket]) {
        const int row = b * length_ + a.position;
        const int c0 = a.head < 0 ? 0 : a.head * d_head;
        const int width = a.head < 0 ? static_cast<int>(m.cols()) : d_head;
        Tensor t({static_cast<std::size_t>(width)});
        t.vec() = m.block(row, c0, 1, width).transpose();
        caches[static_cast<std::size_t>(b)][a] = std::move(t);
      }
    }
  }

  const Weights& w_;
  int batch_;
  int length_;
  std::vector<const SequencePlan*> plans_;
  std::vector<LayerTrace> layers_;
  LnTrace lnf_;
  RowMatrix hf_;
};

std::vector<ForwardResult> run_group(const Weights& w, std::span<const SequenceRequest* const> group) {
  const int batch = static_cast<int>(group.size());
  const int length = static_cast<int>(group.front()->tokens.size());
  require(length > 0, ErrorCode::kInvalidArgument, "forward on an empty token sequence");

  std::vector<SequencePlan> plans;
  plans.reserve(group.size());
  std::vector<const std::vector<int>*> tokens;
  for (const auto* req : group) {
    plans.push_back(plan_sequence(w, length, req->slots, req->interventions, req->probes));
    tokens.push_back(&req->tokens);
  }
  std::vector<const SequencePlan*> plan_ptrs;
  for (const auto& p : plans) plan_ptrs.push_back(&p);

  BatchPass pass(w, batch, length);
  pass.set_plans(plan_ptrs);
  pass.caches.resize(group.size());
  RowMatrix logits = pass.run(pass.embed(tokens, {}));

  std::vector<ForwardResult> out(group.size());
  const auto vocab = static_cast<std::size_t>(w.config.vocab_size);
  for (int b = 0; b < batch; ++b) {
    auto& r = out[static_cast<std::size_t>(b)];
    r.logits = Tensor({static_cast<std::size_t>(length), vocab});
    r.logits.mat() = logits.middleRows(b * length, length);
    require(r.logits.all_finite(), ErrorCode::kNumericDomain, "forward produced non-finite logits");
    r.cache = std::move(pass.caches[static_cast<std::size_t>(b)]);
  }
  return out;
}

}  // namespace

ForwardResult forward(const Weights& w, std::span<const int> tokens, const SlotMap& slots,
                      std::span<const InterventionSpec> interventions, std::span<const Probe> probes) {
  SequenceRequest req{{tokens.begin(), tokens.end()},
                      slots,
                      {interventions.begin(), interventions.end()},
                      {probes.begin(), probes.end()}};
  const SequenceRequest* ptr = &req;
  return std::move(run_group(w, std::span<const SequenceRequest* const>(&ptr, 1)).front());
}

std::vector<ForwardResult> forward_batch(const Weights& w, std::span<const SequenceRequest> requests) {
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < requests.size(); ++i) by_length[requests[i].tokens.size()].push_back(i);
  std::vector<ForwardResult> out(requests.size());
  for (const auto& [len, idx] : by_length) {
    std::vector<const SequenceRequest*> group;
    for (auto i : idx) group.push_back(&requests[i]);
    auto results = run_group(w, group);
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = std::move(results[j]);
  }
  return out;
}

int argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t cols = logits.dim(1);
  const double* base = logits.data().data() + row * cols;
  return static_cast<int>(std::max_element(base, base + cols) - base);
}

namespace {

void check_rollout(const Weights& w, std::size_t prompt_len, int n_steps, const SlotMap& slots,
                   std::span<const InterventionSpec> interventions) {
  require(n_steps >= 1, ErrorCode::kInvalidArgument, "generate needs at least one step");
  require(prompt_len > 0, ErrorCode::kInvalidArgument, "generate needs a non-empty prompt");
  require(static_cast<int>(prompt_len) + n_steps <= w.config.max_positions, ErrorCode::kCapacity,
          "prompt plus rollout exceeds max_positions");
  for (const auto& spec : interventions) {
    for (const auto& a : resolve(spec.key, spec.channels, slots, w.config)) {
      require(a.position < static_cast<int>(prompt_len), ErrorCode::kAddress,
              "rollout interventions may only address prompt positions");
    }
  }
}

}  // namespace

std::vector<int> generate(const Weights& w, std::span<const int> prompt, int n_steps, const SlotMap& slots,
                          std::span<const InterventionSpec> interventions) {
  GenerationRequest req{{prompt.begin(), prompt.end()}, slots, {interventions.begin(), interventions.end()}};
  return generate_batch(w, std::span<const GenerationRequest>(&req, 1), n_steps).front();
}

std::vector<std::vector<int>> generate_batch(const Weights& w, std::span<const GenerationRequest> requests,
                                             int n_steps) {
  std::vector<SequenceRequest> seqs;
  seqs.reserve(requests.size());
  for (const auto& r : requests) {
    check_rollout(w, r.prompt.size(), n_steps, r.slots, r.interventions);
    seqs.push_back({r.prompt, r.slots, r.interventions, {}});
  }
  std::vector<std::vector<int>> out(requests.size());
  for (int step = 0; step < n_steps; ++step) {
    const auto results = forward_batch(w, seqs);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const int next = argmax_row(results[i].logits, seqs[i].tokens.size() - 1);
      out[i].push_back(next);
      seqs[i].tokens.push_back(next);
    }
  }
  return out;
}

ParamMask all_parameters(const ModelConfig& cfg) {
  const auto names = parameter_names(cfg);
  return {names.begin(), names.end()};
}

namespace {

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t n_targets = 0;
};

// Runs every equal-length group; calls `on_group` with the pass, its logits
// and the example indices so the caller can backpropagate.
template <typename OnGroup>
BatchOutcome for_each_length_group(const Weights& w, std::span<const TrainExample> batch, OnGroup&& on_group) {
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < batch.size(); ++i) by_length[batch[i].tokens.size()].push_back(i);
  BatchOutcome total;
  for (const auto& [len, idx] : by_length) {
    const int length = static_cast<int>(len);
    const int n = static_cast<int>(idx.size());
    std::vector<const std::vector<int>*> tokens;
    std::vector<const std::vector<InputOverride>*> overrides;
    for (auto i : idx) {
      tokens.push_back(&batch[i].tokens);
      overrides.push_back(&batch[i].overrides);
    }
    BatchPass pass(w, n, length);
    RowMatrix logits = pass.run(pass.embed(tokens, overrides));
    on_group(pass, logits, idx, length, total);
  }
  return total;
}

void accumulate_softmax_ce(const RowMatrix& logits, int row, int target, double& loss_sum, RowMatrix* dlogits) {
  const auto r = logits.row(row);
  const double mx = r.maxCoeff();
  const double lse = mx + std::log((r.array() - mx).exp().sum());
  loss_sum += lse - r(target);
  if (dlogits) {
    dlogits->row(row) += (r.array() - lse).exp().matrix();
    (*dlogits)(row, target) -= 1.0;
  }
}

}  // namespace

double batch_loss(const Weights& w, std::span<const TrainExample> batch) {
  const auto outcome = for_each_length_group(
      w, batch, [&](BatchPass&, const RowMatrix& logits, const std::vector<std::size_t>& idx, int length,
                    BatchOutcome& total) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          for (const auto& [pos, target] : batch[idx[j]].targets) {
            accumulate_softmax_ce(logits, static_cast<int>(j) * length + pos, target, total.loss_sum, nullptr);
            ++total.n_targets;
          }
        }
      });
  require(outcome.n_targets > 0, ErrorCode::kInvalidArgument, "batch has no supervised positions");
  const double loss = outcome.loss_sum / static_cast<double>(outcome.n_targets);
  require(std::isfinite(loss), ErrorCode::kNumericDomain, "non-finite loss");
  return loss;
}

LossGrad loss_and_grad(const Weights& w, std::span<const TrainExample> batch, const ParamMask& mask) {
  std::size_t n_targets = 0;
  for (const auto& ex : batch) {
    for (const auto& [pos, target] : ex.targets) {
      require(pos >= 0 && pos < static_cast<int>(ex.tokens.size()), ErrorCode::kInvalidArgument,
              "supervised position out of range");
      require(target >= 0 && target < w.config.vocab_size, ErrorCode::kInvalidArgument,
              "target token outside vocabulary");
      ++n_targets;
    }
  }
  require(n_targets > 0, ErrorCode::kInvalidArgument, "batch has no supervised positions");
  const double inv_n = 1.0 / static_cast<double>(n_targets);

  LossGrad out;
  out.grads = zero_weights(w.config);
  out.override_grads.resize(batch.size());
  const bool want_params = !mask.empty();
  const auto d = static_cast<std::size_t>(w.config.d_model);

  const auto outcome = for_each_length_group(
      w, batch, [&](BatchPass& pass, const RowMatrix& logits, const std::vector<std::size_t>& idx, int length,
                    BatchOutcome& total) {
        RowMatrix dlogits = RowMatrix::Zero(logits.rows(), logits.cols());
        for (std::size_t j = 0; j < idx.size(); ++j) {
          for (const auto& [pos, target] : batch[idx[j]].targets) {
            accumulate_softmax_ce(logits, static_cast<int>(j) * length + pos, target, total.loss_sum, &dlogits);
            ++total.n_targets;
          }
        }
        dlogits *= inv_n;
        RowMatrix dx0 = pass.backward(dlogits, want_params ? &out.grads : nullptr);

        for (std::size_t j = 0; j < idx.size(); ++j) {
          const auto& ex = batch[idx[j]];
          std::vector<bool> replaced(ex.tokens.size(), false);
          for (const auto& ov : ex.overrides) {
            Tensor g({d});
            g.vec() = dx0.row(static_cast<Eigen::Index>(j) * length + ov.position).transpose();
            out.override_grads[idx[j]].push_back(std::move(g));
            if (ov.replace_token) replaced[static_cast<std::size_t>(ov.position)] = true;
          }
          if (!want_params) continue;
          for (int t = 0; t < length; ++t) {
            const auto row = dx0.row(static_cast<Eigen::Index>(j) * length + t);
            if (!replaced[static_cast<std::size_t>(t)]) {
              out.grads.tok_emb.mat().row(ex.tokens[static_cast<std::size_t>(t)]) += row;
            }
            out.grads.pos_emb.mat().row(t) += row;
          }
        }
      });

  out.loss = outcome.loss_sum * inv_n;
  require(std::isfinite(out.loss), ErrorCode::kNumericDomain, "non-finite loss");
  if (want_params) {
    for_each_parameter(out.grads, [&](const std::string& name, Tensor& t) {
      if (!mask.contains(name)) t.fill(0.0);
    });
  }
  return out;
}

}  // namespace patchlab
