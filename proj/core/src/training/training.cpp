#include "patchlab/training/training.hpp"

#include <algorithm>
#include <cmath>

#include "patchlab/error.hpp"
#include "patchlab/interventions/battery.hpp"

namespace patchlab {

TrainExample training_example(const TaskInstance& inst) {
  TrainExample ex;
  if (inst.family == Family::kCopyN) {
    ex.tokens = inst.tokens;
    const int n = static_cast<int>(inst.target.size());
    for (int j = 0; j + 1 < n; ++j) ex.tokens.push_back(inst.target[static_cast<std::size_t>(j)]);
    const int eq = inst.answer_position();
    for (int j = 0; j < n; ++j) ex.targets.push_back({eq + j, inst.target[static_cast<std::size_t>(j)]});
  } else {
    ex.tokens = inst.tokens;
    ex.targets.push_back({inst.answer_position(), inst.target.front()});
  }
  return ex;
}

ExampleStream routing_stream(Family family, const Vocab& vocab) {
  require(family != Family::kCopyN, ErrorCode::kInvalidArgument, "routing stream needs a routing family");
  const auto routes = family_routes(family);
  const auto valid_b = identifiable_operands(family, vocab.modulus);
  return [=](Rng& rng) {
    TaskInstance inst;
    inst.family = family;
    const Route route = routes[rng.uniform_index(routes.size())];
    const int a = rng.uniform_int(0, vocab.modulus - 1);
    const int b = valid_b[rng.uniform_index(valid_b.size())];
    inst.tokens = {ctrl_token(route, vocab), a, vocab.op(), b, vocab.eq()};
    inst.target = {route_answer(route, a, b, vocab.modulus)};
    return training_example(inst);
  };
}

ExampleStream copy_stream(std::vector<int> lengths, const Vocab& vocab, int max_positions) {
  require(!lengths.empty(), ErrorCode::kInvalidArgument, "copy stream needs at least one N");
  return [=](Rng& rng) {
    const int n = lengths[rng.uniform_index(lengths.size())];
    auto inst = gen_copyN(n, 1, vocab, rng, max_positions).front();
    return training_example(inst);
  };
}

TrainResult train_base(const ModelConfig& cfg, const ExampleStream& stream, const BaseTrainConfig& tc, Rng& rng,
                       int neutral_token, const std::function<void(int, const Weights&)>& on_checkpoint) {
  require(tc.steps >= 0 && tc.batch_size >= 1, ErrorCode::kInvalidArgument, "bad training budget");
  Rng init_rng = rng.child(0);
  Rng data_rng = rng.child(1);
  TrainResult out;
  out.weights = init_model(cfg, init_rng);
  auto& w = out.weights;

  std::vector<Tensor*> params;
  std::vector<bool> decay;
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    params.push_back(&t);
    decay.push_back(!(name.ends_with(".gain") || name.ends_with("bias") || name.find(".b_") != std::string::npos));
  });
  AdamW opt({tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay}, params, decay);
  const auto mask = all_parameters(cfg);

  int above = 0;
  for (int step = 1; step <= tc.steps; ++step) {
    std::vector<TrainExample> batch;
    batch.reserve(static_cast<std::size_t>(tc.batch_size));
    for (int i = 0; i < tc.batch_size; ++i) {
      batch.push_back(stream(data_rng));
      if (neutral_token >= 0 &&
          std::find(batch.back().tokens.begin(), batch.back().tokens.end(), neutral_token) != batch.back().tokens.end()) {
        ++out.log.neutral_audit_hits;
      }
    }
    out.log.examples_seen += tc.batch_size;
    require(out.log.neutral_audit_hits == 0, ErrorCode::kInvalidArgument,
            "training stream supervises the NEUTRAL control token");

    auto lg = loss_and_grad(w, batch, mask);
    if (step == 1) out.log.initial_loss = lg.loss;
    out.log.final_loss = lg.loss;
    above = lg.loss > 10.0 * out.log.initial_loss ? above + 1 : 0;
    if (above >= 100) {
      fail(ErrorCode::kTrainingFailure, "loss diverged: " + std::to_string(lg.loss) + " at step " +
                                            std::to_string(step) + " vs initial " +
                                            std::to_string(out.log.initial_loss));
    }
    if (step == 1 || step % tc.log_every == 0 || step == tc.steps) out.log.loss_curve.push_back({step, lg.loss});

    if (tc.grad_clip > 0.0) {
      double sq = 0.0;
      for_each_parameter(lg.grads, [&](const std::string&, const Tensor& t) { sq += t.vec().squaredNorm(); });
      const double norm = std::sqrt(sq);
      if (norm > tc.grad_clip) {
        for_each_parameter(lg.grads, [&](const std::string&, Tensor& t) { t.vec() *= tc.grad_clip / norm; });
      }
    }
    std::vector<const Tensor*> grads;
    for_each_parameter(lg.grads, [&](const std::string&, const Tensor& t) { grads.push_back(&t); });
    opt.step(grads);
    require(all_finite(w), ErrorCode::kTrainingFailure, "non-finite weights at step " + std::to_string(step));

    if (tc.checkpoint_every > 0 && (step % tc.checkpoint_every == 0 || step == tc.steps)) {
      out.log.checkpoints.push_back({step, weights_digest(w)});
      if (on_checkpoint) on_checkpoint(step, w);
    }
  }
  return out;
}

InputOverride TunableSlot::override_for(const TaskInstance& inst) const {
  const auto it = inst.slots.find(slot);
  require(it != inst.slots.end(), ErrorCode::kAddress, "instance has no slot '" + slot + "'");
  InputOverride ov;
  ov.position = it->second;
  if (frozen_random_base) {
    ov.vector = base;
    ov.vector.vec() += vector.vec();
    ov.replace_token = true;
  } else {
    ov.vector = vector;
    ov.replace_token = replaces_token;
  }
  return ov;
}

namespace {

// The same input change expressed as a layer-0 residual write, so evaluation
// can reuse the intervention path.
InterventionSpec override_spec(const Weights& w, const TunableSlot& ts, const TaskInstance& inst) {
  const auto ov = ts.override_for(inst);
  InterventionSpec spec;
  spec.key = {0, Site::kResidBlock, std::nullopt, {"pos:" + std::to_string(ov.position)}};
  spec.channels = Channels::kResid;
  Tensor v = ov.vector;
  if (ov.replace_token) {
    v.vec() += w.pos_emb.mat().row(ov.position).transpose();
    spec.mode = WriteMode::kReplace;
  } else {
    spec.mode = WriteMode::kAdd;
  }
  spec.source = {std::move(v)};
  return spec;
}

double slot_acc(const Weights& w, std::span<const TaskInstance> receivers, const TunableSlot& ts) {
  std::vector<std::vector<InterventionSpec>> specs;
  for (const auto& inst : receivers) specs.push_back({override_spec(w, ts, inst)});
  return evaluate_routing(w, receivers, specs).route_acc;
}

void optimise_slot(const Weights& w, TunableSlot& ts, std::span<const TaskInstance> support, const TrainBudget& budget,
                   const std::function<void(int, const TunableSlot&)>& on_step) {
  require(budget.steps >= 0, ErrorCode::kInvalidArgument, "negative step budget");
  AdamW opt({budget.lr, 0.9, 0.999, 1e-8, 0.0}, {&ts.vector});
  for (int step = 1; step <= budget.steps; ++step) {
    std::vector<TrainExample> batch;
    for (const auto& inst : support) {
      auto ex = training_example(inst);
      ex.overrides.push_back(ts.override_for(inst));
      batch.push_back(std::move(ex));
    }
    const auto lg = loss_and_grad(w, batch, {});
    Tensor g(ts.vector.shape());
    for (const auto& og : lg.override_grads) g.vec() += og.front().vec();
    opt.step({&g});
    if (on_step) on_step(step, ts);
  }
  ts.support_acc = slot_acc(w, support, ts);
}

std::vector<TaskInstance> take_support(std::span<const TaskInstance> receivers, Route route, int n) {
  std::vector<TaskInstance> out;
  for (const auto& inst : receivers) {
    if (inst.route == route && static_cast<int>(out.size()) < n) out.push_back(inst);
  }
  require(static_cast<int>(out.size()) == n, ErrorCode::kInvalidArgument,
          "support pool has fewer than " + std::to_string(n) + " receivers of route " +
              std::string(to_string(route)));
  return out;
}

}  // namespace

TunableSlot invert_control(const Weights& w, std::span<const TaskInstance> support_receivers, Route route,
                           const TrainBudget& budget, const Vocab& vocab) {
  const auto support = take_support(support_receivers, route, budget.n_support);
  TunableSlot ts;
  ts.slot = "ctrl";
  ts.route = route;
  ts.replaces_token = true;
  ts.vector = Tensor({static_cast<std::size_t>(w.config.d_model)});
  ts.vector.vec() = w.tok_emb.mat().row(vocab.ctrl_neutral()).transpose();
  optimise_slot(w, ts, support, budget, {});
  return ts;
}

TunableSlot tune_slot(const Weights& w, const std::string& slot, std::span<const TaskInstance> support_receivers,
                      Route route, const TrainBudget& budget, Rng& rng, bool frozen_random_base,
                      const std::function<void(int, const TunableSlot&)>& on_step) {
  const auto support = take_support(support_receivers, route, budget.n_support);
  TunableSlot ts;
  ts.slot = slot;
  ts.route = route;
  ts.vector = Tensor({static_cast<std::size_t>(w.config.d_model)});
  ts.frozen_random_base = frozen_random_base;
  if (frozen_random_base) {
    ts.base = Tensor({static_cast<std::size_t>(w.config.d_model)});
    for (auto& x : ts.base.data()) x = 0.02 * rng.normal();
  }
  optimise_slot(w, ts, support, budget, on_step);
  return ts;
}

double tuned_route_acc(const Weights& w, std::span<const TaskInstance> receivers,
                       std::span<const TunableSlot> per_route) {
  std::vector<std::vector<InterventionSpec>> specs;
  for (const auto& inst : receivers) {
    const auto it = std::find_if(per_route.begin(), per_route.end(),
                                 [&](const TunableSlot& t) { return t.route == inst.route; });
    require(it != per_route.end(), ErrorCode::kInvalidArgument, "no tuned slot for a receiver's route");
    specs.push_back({override_spec(w, *it, inst)});
  }
  return evaluate_routing(w, receivers, specs).route_acc;
}

Weights LowRankUpdate::apply_to(const Weights& w) const {
  require(projection == "attn.w_o", ErrorCode::kInvalidArgument, "only attn.w_o low-rank targets are supported");
  require(layer >= 0 && layer < w.config.n_layers, ErrorCode::kInvalidArgument, "low-rank layer out of range");
  Weights out = w;
  out.layers[static_cast<std::size_t>(layer)].w_o.mat() += alpha * (a.mat() * b.mat());
  return out;
}

LowRankUpdate lowrank_baseline(const Weights& w, int layer, int rank, double alpha,
                               std::span<const TaskInstance> support_receivers,
                               std::span<const TaskInstance> query_receivers, const TrainBudget& budget, Rng& rng) {
  require(rank >= 1, ErrorCode::kInvalidArgument, "low-rank update needs rank >= 1");
  require(budget.n_support >= 1 && static_cast<std::size_t>(budget.n_support) <= support_receivers.size(),
          ErrorCode::kInvalidArgument, "support budget exceeds the support pool");
  const auto d = static_cast<std::size_t>(w.config.d_model);
  LowRankUpdate u;
  u.layer = layer;
  u.rank = rank;
  u.alpha = alpha;
  u.cost = budget.cost();
  u.a = Tensor({d, static_cast<std::size_t>(rank)});
  for (auto& x : u.a.data()) x = 0.02 * rng.normal();
  u.b = Tensor({static_cast<std::size_t>(rank), d});

  const std::span<const TaskInstance> support = support_receivers.first(static_cast<std::size_t>(budget.n_support));
  std::vector<TrainExample> batch;
  for (const auto& inst : support) batch.push_back(training_example(inst));
  const std::string name = "blocks." + std::to_string(layer) + ".attn.w_o";
  AdamW opt({budget.lr, 0.9, 0.999, 1e-8, 0.0}, {&u.a, &u.b});
  for (int step = 0; step < budget.steps; ++step) {
    const Weights eff = u.apply_to(w);
    const auto lg = loss_and_grad(eff, batch, {name});
    const auto dw = lg.grads.layers[static_cast<std::size_t>(layer)].w_o.mat();
    Tensor ga(u.a.shape());
    Tensor gb(u.b.shape());
    ga.mat() = alpha * dw * u.b.mat().transpose();
    gb.mat() = alpha * u.a.mat().transpose() * dw;
    opt.step({&ga, &gb});
  }
  const Weights eff = u.apply_to(w);
  u.support_acc = evaluate_routing(eff, support).route_acc;
  u.query_acc = evaluate_routing(eff, query_receivers).route_acc;
  return u;
}

}  // namespace patchlab
