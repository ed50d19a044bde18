#include "convkit/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "convkit/rng.hpp"

namespace convkit {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::convt: return "convt";
    case LayerKind::pool: return "pool";
    case LayerKind::bilinear: return "bilinear";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::lrn: return "lrn";
    case LayerKind::bnorm: return "bnorm";
    case LayerKind::spnorm: return "spnorm";
    case LayerKind::softmax: return "softmax";
    case LayerKind::loss: return "loss";
    case LayerKind::pdist: return "pdist";
    case LayerKind::sum: return "sum";
    case LayerKind::split: return "split";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(LayerKind::split); ++k) {
    LayerKind kind = static_cast<LayerKind>(k);
    if (name == layer_kind_name(kind)) return kind;
  }
  throw GraphError("unknown layer kind '" + name + "'");
}

int Graph::var_index(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

bool Graph::has_var(const std::string& name) const {
  return var_index(name) >= 0;
}

const VarDef& Graph::var(const std::string& name) const {
  int k = var_index(name);
  if (k < 0) throw GraphError("unknown variable '" + name + "'");
  return vars_[static_cast<size_t>(k)];
}

const LayerDef* Graph::find_layer(const std::string& name) const {
  for (const auto& l : layers_) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

int Graph::intern_var(const std::string& name, VarRole role) {
  if (name.empty()) throw GraphError("empty variable name");
  int k = var_index(name);
  if (k >= 0) return k;
  VarDef v;
  v.name = name;
  v.role = role;
  vars_.push_back(std::move(v));
  k = static_cast<int>(vars_.size()) - 1;
  by_name_[name] = k;
  return k;
}

void Graph::add_input(const std::string& name, std::optional<Shape> shape) {
  if (finalized_) throw GraphError("graph already finalized");
  if (has_var(name)) throw GraphError("variable '" + name + "' declared twice");
  int k = intern_var(name, VarRole::input);
  vars_[static_cast<size_t>(k)].shape = shape;
  vars_[static_cast<size_t>(k)].declared = true;
}

void Graph::add_param(const std::string& name, std::optional<Shape> shape) {
  if (finalized_) throw GraphError("graph already finalized");
  if (has_var(name)) throw GraphError("variable '" + name + "' declared twice");
  int k = intern_var(name, VarRole::param);
  vars_[static_cast<size_t>(k)].shape = shape;
  vars_[static_cast<size_t>(k)].declared = true;
}

void Graph::check_layer_arity(const LayerDef& def) const {
  size_t nin = def.inputs.size();
  size_t nout = def.outputs.size();
  if (def.is_grad) {
    size_t want_in = static_cast<size_t>(def.mirrored_inputs) +
                     2 * static_cast<size_t>(def.mirrored_outputs);
    if (nin != want_in || nout != static_cast<size_t>(def.mirrored_inputs)) {
      throw GraphError("grad layer '" + def.name + "' has wrong arity");
    }
    return;
  }
  auto want = [&](size_t in_lo, size_t in_hi, size_t out) {
    if (nin < in_lo || nin > in_hi || nout != out) {
      throw GraphError("layer '" + def.name + "' (" +
                       layer_kind_name(def.kind) + ") has wrong arity");
    }
  };
  switch (def.kind) {
    case LayerKind::conv: want(2, 3, 1); break;
    case LayerKind::convt: want(2, 2, 1); break;
    case LayerKind::pool: want(1, 1, 1); break;
    case LayerKind::bilinear: want(2, 2, 1); break;
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::lrn:
    case LayerKind::spnorm:
    case LayerKind::softmax: want(1, 1, 1); break;
    case LayerKind::bnorm: want(3, 4, 1); break;
    case LayerKind::loss: want(2, 3, 1); break;
    case LayerKind::pdist: want(2, 2, 1); break;
    case LayerKind::sum: want(1, nin < 1 ? 0 : nin, 1); break;
    case LayerKind::split: {
      auto* h = std::get_if<SplitHyper>(&def.hyper);
      size_t copies = h ? static_cast<size_t>(h->copies) : 2;
      want(1, 1, copies);
      break;
    }
  }
}

void Graph::add_layer(LayerDef def) {
  if (finalized_) throw GraphError("graph already finalized");
  if (def.name.empty()) throw GraphError("empty layer name");
  if (find_layer(def.name)) {
    throw GraphError("layer '" + def.name + "' declared twice");
  }
  check_layer_arity(def);
  int li = static_cast<int>(layers_.size());
  for (size_t slot = 0; slot < def.inputs.size(); ++slot) {
    int vi = intern_var(def.inputs[slot], VarRole::input);
    vars_[static_cast<size_t>(vi)].consumers.emplace_back(li,
                                                          static_cast<int>(slot));
  }
  for (const auto& out : def.outputs) {
    int vi = var_index(out);
    if (vi >= 0) {
      VarDef& v = vars_[static_cast<size_t>(vi)];
      if (v.producer >= 0) {
        throw GraphError("variable '" + out + "' produced by two layers");
      }
      if (v.declared) {
        throw GraphError("variable '" + out +
                         "' is an input or parameter and cannot be produced");
      }
      v.role = VarRole::derived;
      v.producer = li;
    } else {
      vi = intern_var(out, VarRole::derived);
      vars_[static_cast<size_t>(vi)].producer = li;
    }
  }
  layers_.push_back(std::move(def));
}

void Graph::finalize() {
  if (finalized_) return;
  // Anything still marked input that was never declared and never
  // produced was referenced only as a layer input; it stays an input.
  // Stable topological sort over the bipartite graph: ready variables
  // are picked in declaration order.
  var_order_.clear();
  layer_order_.clear();
  std::vector<int> missing(layers_.size(), 0);
  for (size_t li = 0; li < layers_.size(); ++li) {
    std::set<std::string> uniq(layers_[li].inputs.begin(),
                               layers_[li].inputs.end());
    missing[li] = static_cast<int>(uniq.size());
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (size_t vi = 0; vi < vars_.size(); ++vi) {
    if (vars_[vi].producer < 0) ready.push(static_cast<int>(vi));
  }
  std::vector<char> var_done(vars_.size(), 0);
  while (!ready.empty()) {
    int vi = ready.top();
    ready.pop();
    if (var_done[static_cast<size_t>(vi)]) continue;
    var_done[static_cast<size_t>(vi)] = 1;
    var_order_.push_back(vi);
    // A consumer fires once all its distinct inputs are done.
    std::set<int> seen;
    for (auto [li, slot] : vars_[static_cast<size_t>(vi)].consumers) {
      if (!seen.insert(li).second) continue;
      if (--missing[static_cast<size_t>(li)] == 0) {
        layer_order_.push_back(li);
        for (const auto& out : layers_[static_cast<size_t>(li)].outputs) {
          ready.push(var_index(out));
        }
      }
    }
  }
  if (var_order_.size() != vars_.size()) {
    throw GraphError("graph contains a cycle");
  }
  // Non-differentiable variables: consumed, and only through label-like
  // slots (loss labels/weights, bnorm fixed moments).
  non_diff_vars_.clear();
  for (const auto& v : vars_) {
    if (v.consumers.empty()) continue;
    bool all_non_diff = true;
    for (auto [li, slot] : v.consumers) {
      const LayerDef& l = layers_[static_cast<size_t>(li)];
      bool nd = (!l.is_grad && l.kind == LayerKind::loss && slot >= 1) ||
                (!l.is_grad && l.kind == LayerKind::bnorm && slot == 3);
      if (!nd) {
        all_non_diff = false;
        break;
      }
    }
    if (all_non_diff) non_diff_vars_.push_back(v.name);
  }
  finalized_ = true;
}

std::vector<std::string> Graph::sink_vars() const {
  std::vector<std::string> out;
  for (const auto& v : vars_) {
    if (v.consumers.empty()) out.push_back(v.name);
  }
  return out;
}

std::vector<std::string> toposort(const Graph& g) {
  if (!g.finalized()) throw GraphError("toposort on a non-finalized graph");
  std::vector<std::string> names;
  names.reserve(g.var_order().size());
  for (int vi : g.var_order()) {
    names.push_back(g.vars()[static_cast<size_t>(vi)].name);
  }
  return names;
}

namespace {

// ---- block dispatch ------------------------------------------------------

template <class T>
BnormMoments<T> moments_from_tensor(const Tensor<T>& m, int64_t channels) {
  if (m.shape().h != channels || m.shape().w != 2 || m.size() != 2 * channels) {
    throw ShapeError("moments tensor must be " + std::to_string(channels) +
                     "x2, got " + m.shape().str());
  }
  BnormMoments<T> out;
  out.mean.assign(m.data(), m.data() + channels);
  out.var.assign(m.data() + channels, m.data() + 2 * channels);
  return out;
}

template <class T>
Tensor<T> moments_to_tensor(const BnormMoments<T>& m) {
  int64_t k = static_cast<int64_t>(m.mean.size());
  Tensor<T> t(Shape(k, 2, 1, 1));
  std::copy(m.mean.begin(), m.mean.end(), t.data());
  std::copy(m.var.begin(), m.var.end(), t.data() + k);
  return t;
}

template <class T>
std::vector<Tensor<T>> layer_forward(const LayerDef& def,
                                     const std::vector<const Tensor<T>*>& in,
                                     EvalMode mode, Tape<T>* tape) {
  switch (def.kind) {
    case LayerKind::conv: {
      const auto& h = std::get<ConvHyper>(def.hyper);
      return {conv_forward(*in[0], *in[1], in.size() > 2 ? in[2] : nullptr,
                           h.geom)};
    }
    case LayerKind::convt: {
      const auto& h = std::get<ConvtHyper>(def.hyper);
      return {convt_forward(*in[0], *in[1], h.geom)};
    }
    case LayerKind::pool: {
      const auto& h = std::get<PoolHyper>(def.hyper);
      return {pool_forward(*in[0], h.geom)};
    }
    case LayerKind::bilinear:
      return {bilinear_forward(*in[0], *in[1])};
    case LayerKind::relu:
      return {relu_forward(*in[0])};
    case LayerKind::sigmoid:
      return {sigmoid_forward(*in[0])};
    case LayerKind::lrn: {
      const auto& h = std::get<LrnParams>(def.hyper);
      return {lrn_forward(*in[0], h)};
    }
    case LayerKind::bnorm: {
      const auto& h = std::get<BnormHyper>(def.hyper);
      if (mode == EvalMode::infer) {
        if (in.size() < 4) {
          throw ShapeError("bnorm inference needs a moments input");
        }
        return {bnorm_infer(*in[0], *in[1], *in[2], h.epsilon,
                            moments_from_tensor(*in[3], in[0]->shape().c))};
      }
      BnormMoments<T> m;
      Tensor<T> y = bnorm_forward(*in[0], *in[1], *in[2], h.epsilon, &m);
      if (tape) tape->aux[def.name] = moments_to_tensor(m);
      return {std::move(y)};
    }
    case LayerKind::spnorm: {
      const auto& h = std::get<SpnormParams>(def.hyper);
      return {spnorm_forward(*in[0], h)};
    }
    case LayerKind::softmax:
      return {softmax_forward(*in[0])};
    case LayerKind::loss: {
      const auto& h = std::get<LossHyper>(def.hyper);
      T v = loss_forward(*in[0], *in[1], h.kind,
                         in.size() > 2 ? in[2] : nullptr, h.opts);
      Tensor<T> y(Shape(1, 1, 1, 1));
      y[0] = v;
      return {std::move(y)};
    }
    case LayerKind::pdist: {
      const auto& h = std::get<PdistHyper>(def.hyper);
      return {pdist_forward(*in[0], *in[1], h.p, h.no_root)};
    }
    case LayerKind::sum: {
      Tensor<T> y = *in[0];
      for (size_t k = 1; k < in.size(); ++k) {
        if (in[k]->shape() != y.shape()) {
          throw ShapeError("sum inputs must share one shape");
        }
        for (int64_t e = 0; e < y.size(); ++e) y[e] += (*in[k])[e];
      }
      return {std::move(y)};
    }
    case LayerKind::split: {
      std::vector<Tensor<T>> outs;
      for (size_t k = 0; k < def.outputs.size(); ++k) outs.push_back(*in[0]);
      return outs;
    }
  }
  throw GraphError("unhandled layer kind");
}

template <class T>
std::vector<Tensor<T>> layer_backward(const LayerDef& def,
                                      const std::vector<const Tensor<T>*>& in,
                                      const std::vector<const Tensor<T>*>& out,
                                      const std::vector<const Tensor<T>*>& proj,
                                      EvalMode mode) {
  std::vector<Tensor<T>> d;
  switch (def.kind) {
    case LayerKind::conv: {
      const auto& h = std::get<ConvHyper>(def.hyper);
      Tensor<T> dx, df, db;
      conv_backward(*in[0], *in[1], h.geom, *proj[0], &dx, &df,
                    in.size() > 2 ? &db : nullptr);
      d.push_back(std::move(dx));
      d.push_back(std::move(df));
      if (in.size() > 2) d.push_back(reshaped(db, in[2]->shape()));
      return d;
    }
    case LayerKind::convt: {
      const auto& h = std::get<ConvtHyper>(def.hyper);
      Tensor<T> dx, df;
      convt_backward(*in[0], *in[1], h.geom, *proj[0], &dx, &df);
      d.push_back(std::move(dx));
      d.push_back(std::move(df));
      return d;
    }
    case LayerKind::pool: {
      const auto& h = std::get<PoolHyper>(def.hyper);
      d.push_back(pool_backward(*in[0], h.geom, *proj[0]));
      return d;
    }
    case LayerKind::bilinear: {
      Tensor<T> dx, dg;
      bilinear_backward(*in[0], *in[1], *proj[0], &dx, &dg);
      d.push_back(std::move(dx));
      d.push_back(std::move(dg));
      return d;
    }
    case LayerKind::relu:
      d.push_back(relu_backward(*in[0], *proj[0]));
      return d;
    case LayerKind::sigmoid:
      d.push_back(sigmoid_backward(*out[0], *proj[0]));
      return d;
    case LayerKind::lrn: {
      const auto& h = std::get<LrnParams>(def.hyper);
      d.push_back(lrn_backward(*in[0], h, *proj[0]));
      return d;
    }
    case LayerKind::bnorm: {
      if (mode == EvalMode::infer) {
        throw GraphError("bnorm backward requires a train-mode evaluation");
      }
      const auto& h = std::get<BnormHyper>(def.hyper);
      Tensor<T> dx, dw, db;
      bnorm_backward(*in[0], *in[1], *in[2], h.epsilon, *proj[0], &dx, &dw,
                     &db);
      d.push_back(std::move(dx));
      d.push_back(std::move(dw));
      d.push_back(std::move(db));
      if (in.size() > 3) d.push_back(Tensor<T>(in[3]->shape()));
      return d;
    }
    case LayerKind::spnorm: {
      const auto& h = std::get<SpnormParams>(def.hyper);
      d.push_back(spnorm_backward(*in[0], h, *proj[0]));
      return d;
    }
    case LayerKind::softmax:
      d.push_back(softmax_backward(*out[0], *proj[0]));
      return d;
    case LayerKind::loss: {
      const auto& h = std::get<LossHyper>(def.hyper);
      if (proj[0]->size() != 1) {
        throw ShapeError("loss projection must be scalar");
      }
      d.push_back(loss_backward(*in[0], *in[1], h.kind,
                                in.size() > 2 ? in[2] : nullptr, (*proj[0])[0],
                                h.opts));
      d.push_back(Tensor<T>(in[1]->shape()));  // labels carry no derivative
      if (in.size() > 2) d.push_back(Tensor<T>(in[2]->shape()));
      return d;
    }
    case LayerKind::pdist: {
      const auto& h = std::get<PdistHyper>(def.hyper);
      Tensor<T> dx, dt;
      pdist_backward(*in[0], *in[1], h.p, h.no_root, *proj[0], &dx, &dt);
      d.push_back(std::move(dx));
      d.push_back(std::move(dt));
      return d;
    }
    case LayerKind::sum: {
      for (size_t k = 0; k < in.size(); ++k) {
        if (in[k]->shape() != proj[0]->shape()) {
          throw ShapeError("sum backward: projection shape mismatch");
        }
        d.push_back(*proj[0]);
      }
      return d;
    }
    case LayerKind::split: {
      Tensor<T> dx(in[0]->shape());
      for (size_t k = 0; k < proj.size(); ++k) {
        if (proj[k]->shape() != in[0]->shape()) {
          throw ShapeError("split backward: projection shape mismatch");
        }
        for (int64_t e = 0; e < dx.size(); ++e) dx[e] += (*proj[k])[e];
      }
      d.push_back(std::move(dx));
      return d;
    }
  }
  throw GraphError("unhandled layer kind");
}

// Layers required to compute the target variables (all layers when the
// target list is empty).
std::vector<char> needed_layers(const Graph& g,
                                const std::vector<std::string>& targets) {
  std::vector<char> needed(g.layers().size(), 1);
  if (targets.empty()) return needed;
  std::fill(needed.begin(), needed.end(), 0);
  std::vector<char> want_var(g.vars().size(), 0);
  for (const auto& t : targets) {
    const VarDef& v = g.var(t);
    want_var[static_cast<size_t>(&v - g.vars().data())] = 1;
  }
  const auto& order = g.layer_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const LayerDef& l = g.layers()[static_cast<size_t>(*it)];
    bool produce = false;
    for (const auto& out : l.outputs) {
      const VarDef& v = g.var(out);
      if (want_var[static_cast<size_t>(&v - g.vars().data())]) produce = true;
    }
    if (!produce) continue;
    needed[static_cast<size_t>(*it)] = 1;
    for (const auto& inname : l.inputs) {
      const VarDef& v = g.var(inname);
      want_var[static_cast<size_t>(&v - g.vars().data())] = 1;
    }
  }
  return needed;
}

}  // namespace

template <class T>
Tape<T> forward(const Graph& g, const NamedTensors<T>& bindings, EvalMode mode,
                const std::vector<std::string>& targets) {
  if (!g.finalized()) throw GraphError("forward on a non-finalized graph");
  Tape<T> tape;
  tape.mode = mode;
  for (const auto& [name, value] : bindings) {
    const VarDef& v = g.var(name);
    if (v.role == VarRole::derived) {
      throw GraphError("cannot bind derived variable '" + name + "'");
    }
    if (v.shape && *v.shape != value.shape()) {
      throw GraphError("variable '" + name + "' bound with shape " +
                       value.shape().str() + ", declared " + v.shape->str());
    }
    tape.values.emplace(name, value);
  }
  std::vector<char> needed = needed_layers(g, targets);
  for (int li : g.layer_order()) {
    if (!needed[static_cast<size_t>(li)]) continue;
    const LayerDef& def = g.layers()[static_cast<size_t>(li)];
    std::vector<const Tensor<T>*> in;
    in.reserve(def.inputs.size());
    for (const auto& name : def.inputs) {
      auto it = tape.values.find(name);
      if (it == tape.values.end()) {
        throw GraphError("layer '" + def.name + "': input variable '" + name +
                         "' is not bound");
      }
      in.push_back(&it->second);
    }
    std::vector<Tensor<T>> outs;
    try {
      if (def.is_grad) {
        size_t ni = static_cast<size_t>(def.mirrored_inputs);
        size_t no = static_cast<size_t>(def.mirrored_outputs);
        std::vector<const Tensor<T>*> fin(in.begin(), in.begin() + ni);
        std::vector<const Tensor<T>*> fout(in.begin() + ni,
                                           in.begin() + ni + no);
        std::vector<const Tensor<T>*> fproj(in.begin() + ni + no, in.end());
        outs = layer_backward(def, fin, fout, fproj, mode);
      } else {
        outs = layer_forward(def, in, mode, &tape);
      }
    } catch (const ShapeError& e) {
      throw GraphError("layer '" + def.name + "': " + e.what());
    }
    for (size_t k = 0; k < def.outputs.size(); ++k) {
      tape.values.insert_or_assign(def.outputs[k], std::move(outs[k]));
    }
  }
  return tape;
}

template <class T>
void backward(const Graph& g, Tape<T>& tape, const NamedTensors<T>& seeds) {
  if (!g.finalized()) throw GraphError("backward on a non-finalized graph");
  if (tape.values.empty()) throw GraphError("backward before forward");
  tape.derivs.clear();
  for (const auto& [name, value] : tape.values) {
    if (g.has_var(name)) tape.derivs.emplace(name, Tensor<T>(value.shape()));
  }
  for (const auto& [name, seed] : seeds) {
    auto it = tape.derivs.find(name);
    if (it == tape.derivs.end()) {
      throw GraphError("seed variable '" + name + "' has no forward value");
    }
    if (seed.shape() != it->second.shape()) {
      throw GraphError("seed for '" + name + "' has shape " +
                       seed.shape().str() + ", expected " +
                       it->second.shape().str());
    }
    for (int64_t e = 0; e < seed.size(); ++e) it->second[e] += seed[e];
  }
  const auto& order = g.layer_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const LayerDef& def = g.layers()[static_cast<size_t>(*it)];
    if (def.is_grad) {
      throw GraphError("backward through a reversed graph is not supported");
    }
    // Layers skipped by a pruned forward have no recorded outputs.
    if (tape.values.find(def.outputs[0]) == tape.values.end()) continue;
    std::vector<const Tensor<T>*> in, out, proj;
    for (const auto& name : def.inputs) in.push_back(&tape.values.at(name));
    for (const auto& name : def.outputs) {
      out.push_back(&tape.values.at(name));
      proj.push_back(&tape.derivs.at(name));
    }
    std::vector<Tensor<T>> d;
    try {
      d = layer_backward(def, in, out, proj, tape.mode);
    } catch (const ShapeError& e) {
      throw GraphError("layer '" + def.name + "': " + e.what());
    }
    for (size_t slot = 0; slot < def.inputs.size(); ++slot) {
      Tensor<T>& acc = tape.derivs.at(def.inputs[slot]);
      const Tensor<T>& add = d[slot];
      if (add.shape() != acc.shape()) {
        throw GraphError("layer '" + def.name + "': derivative shape " +
                         add.shape().str() + " for input '" +
                         def.inputs[slot] + "' of shape " + acc.shape().str());
      }
      for (int64_t e = 0; e < acc.size(); ++e) acc[e] += add[e];
    }
  }
}

Graph reverse_graph(const Graph& g) {
  if (!g.finalized()) throw GraphError("reverse_graph on a non-finalized graph");
  Graph rg;
  // Original variables become plain inputs of the reversed network; they
  // are bound from the forward tape.
  for (int vi : g.var_order()) {
    rg.add_input(g.vars()[static_cast<size_t>(vi)].name);
  }
  // Seeds: one input per sink variable.
  for (const auto& v : g.vars()) {
    if (v.consumers.empty()) rg.add_input(grad_var_name(v.name));
  }
  // Topological position of each layer, for ordering summation inputs the
  // same way backward() accumulates them.
  std::vector<int> pos(g.layers().size(), 0);
  for (size_t k = 0; k < g.layer_order().size(); ++k) {
    pos[static_cast<size_t>(g.layer_order()[k])] = static_cast<int>(k);
  }
  // Name of the derivative contribution produced by a given consumer slot.
  auto contrib_name = [&](const VarDef& v, int li, int slot) {
    if (v.consumers.size() == 1) return grad_var_name(v.name);
    return grad_var_name(v.name) + ":" +
           g.layers()[static_cast<size_t>(li)].name + ":" +
           std::to_string(slot);
  };
  // Mirror layers, in reverse firing order.
  const auto& order = g.layer_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const LayerDef& l = g.layers()[static_cast<size_t>(*it)];
    if (l.is_grad) throw GraphError("cannot reverse a reversed graph");
    LayerDef d;
    d.name = "d:" + l.name;
    d.kind = l.kind;
    d.hyper = l.hyper;
    d.is_grad = true;
    d.mirrored_inputs = static_cast<int64_t>(l.inputs.size());
    d.mirrored_outputs = static_cast<int64_t>(l.outputs.size());
    d.inputs = l.inputs;
    d.inputs.insert(d.inputs.end(), l.outputs.begin(), l.outputs.end());
    for (const auto& out : l.outputs) d.inputs.push_back(grad_var_name(out));
    for (size_t slot = 0; slot < l.inputs.size(); ++slot) {
      d.outputs.push_back(
          contrib_name(g.var(l.inputs[slot]), *it, static_cast<int>(slot)));
    }
    rg.add_layer(std::move(d));
  }
  // Summation layers resolve fan-out: a variable consumed k>1 times gets
  // its k contributions added, later consumers first.
  for (const auto& v : g.vars()) {
    if (v.consumers.size() < 2) continue;
    auto consumers = v.consumers;
    std::stable_sort(consumers.begin(), consumers.end(),
                     [&](const std::pair<int, int>& a,
                         const std::pair<int, int>& b) {
                       if (pos[static_cast<size_t>(a.first)] !=
                           pos[static_cast<size_t>(b.first)]) {
                         return pos[static_cast<size_t>(a.first)] >
                                pos[static_cast<size_t>(b.first)];
                       }
                       return a.second < b.second;
                     });
    LayerDef s;
    s.name = "sum:" + grad_var_name(v.name);
    s.kind = LayerKind::sum;
    for (auto [li, slot] : consumers) {
      s.inputs.push_back(contrib_name(v, li, slot));
    }
    s.outputs.push_back(grad_var_name(v.name));
    rg.add_layer(std::move(s));
  }
  rg.finalize();
  return rg;
}

template <class T>
T eval_scalar(const Graph& g, const NamedTensors<T>& bindings,
              const std::string& output, EvalMode mode) {
  Tape<T> tape = forward(g, bindings, mode, {output});
  auto it = tape.values.find(output);
  if (it == tape.values.end() || it->second.size() != 1) {
    throw GraphError("variable '" + output + "' is not a computed scalar");
  }
  return it->second[0];
}

double fd_rel_err(double analytic, double numeric) {
  double diff = std::abs(analytic - numeric);
  double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-2);
  return diff / denom;
}

template <class T>
GradCheckReport grad_check(const Graph& g, const NamedTensors<T>& bindings,
                           const std::string& output, T step,
                           int64_t max_probes, uint64_t seed) {
  Tape<T> tape = forward(g, bindings, EvalMode::train, {output});
  auto it = tape.values.find(output);
  if (it == tape.values.end() || it->second.size() != 1) {
    throw GraphError("grad_check needs a scalar output variable");
  }
  NamedTensors<T> seeds;
  seeds[output] = Tensor<T>::filled(Shape(1, 1, 1, 1), T(1));
  backward(g, tape, seeds);

  const auto& skip = g.non_differentiable_vars();
  NamedTensors<T> probe = bindings;
  GradCheckReport report;
  Xoshiro256 rng(seed);
  for (const auto& [name, value] : bindings) {
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    GradCheckEntry entry;
    entry.var = name;
    const Tensor<T>& analytic = tape.derivs.at(name);
    Tensor<T>& x = probe.at(name);
    std::vector<int64_t> indices;
    if (value.size() <= max_probes) {
      for (int64_t e = 0; e < value.size(); ++e) indices.push_back(e);
    } else {
      std::set<int64_t> chosen;
      while (static_cast<int64_t>(chosen.size()) < max_probes) {
        chosen.insert(static_cast<int64_t>(rng.next() %
                                           static_cast<uint64_t>(value.size())));
      }
      indices.assign(chosen.begin(), chosen.end());
    }
    for (int64_t e : indices) {
      T saved = x[e];
      T h = step * std::max(T(1), std::abs(saved));
      x[e] = saved + h;
      T up = eval_scalar(g, probe, output);
      x[e] = saved - h;
      T down = eval_scalar(g, probe, output);
      x[e] = saved;
      double fd = (static_cast<double>(up) - static_cast<double>(down)) /
                  (2.0 * static_cast<double>(h));
      double err = fd_rel_err(static_cast<double>(analytic[e]), fd);
      entry.max_rel_err = std::max(entry.max_rel_err, err);
      ++entry.probes;
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

#define CONVKIT_INSTANTIATE(T)                                               \
  template Tape<T> forward<T>(const Graph&, const NamedTensors<T>&, EvalMode, \
                              const std::vector<std::string>&);              \
  template void backward<T>(const Graph&, Tape<T>&, const NamedTensors<T>&); \
  template T eval_scalar<T>(const Graph&, const NamedTensors<T>&,            \
                            const std::string&, EvalMode);                   \
  template GradCheckReport grad_check<T>(const Graph&, const NamedTensors<T>&,\
                                         const std::string&, T, int64_t,     \
                                         uint64_t);

CONVKIT_INSTANTIATE(float)
CONVKIT_INSTANTIATE(double)
#undef CONVKIT_INSTANTIATE

}  // namespace convkit
