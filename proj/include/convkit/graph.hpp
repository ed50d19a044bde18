#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "convkit/activation.hpp"
#include "convkit/bilinear.hpp"
#include "convkit/conv.hpp"
#include "convkit/loss.hpp"
#include "convkit/normalize.hpp"
#include "convkit/pool.hpp"
#include "convkit/tensor.hpp"

namespace convkit {

class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

enum class LayerKind {
  conv,
  convt,
  pool,
  bilinear,
  relu,
  sigmoid,
  lrn,
  bnorm,
  spnorm,
  softmax,
  loss,
  pdist,
  sum,
  split,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct ConvHyper {
  ConvGeom geom;
};
struct ConvtHyper {
  ConvTransposeGeom geom;
};
struct PoolHyper {
  PoolGeom geom;
};
struct BnormHyper {
  double epsilon = 1e-5;
};
struct LossHyper {
  LossKind kind = LossKind::softmaxlog;
  LossOptions opts;
};
struct PdistHyper {
  double p = 2.0;
  bool no_root = false;
};
struct SplitHyper {
  int64_t copies = 2;
};

using LayerHyper =
    std::variant<std::monostate, ConvHyper, ConvtHyper, PoolHyper, LrnParams,
                 BnormHyper, SpnormParams, LossHyper, PdistHyper, SplitHyper>;

// A layer node: one block application wiring named variables to named
// variables. Grad layers appear only in reversed graphs; they evaluate
// the backward mode of `kind` and take the mirrored layer's inputs,
// outputs and output projections, in that order.
struct LayerDef {
  std::string name;
  LayerKind kind = LayerKind::relu;
  LayerHyper hyper;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  bool is_grad = false;
  int64_t mirrored_inputs = 0;   // arity of the mirrored layer (grad only)
  int64_t mirrored_outputs = 0;
};

enum class VarRole { input, param, derived };

struct VarDef {
  std::string name;
  VarRole role = VarRole::input;
  std::optional<Shape> shape;
  bool declared = false;  // explicitly added as input/param
  int producer = -1;                        // layer index, -1 for none
  std::vector<std::pair<int, int>> consumers;  // (layer index, input slot)
};

// Network structure: a bipartite DAG of variables and layers. Variables
// have at most one producing layer; parameters and inputs have none.
// Construction is single-threaded; a finalized graph is immutable.
class Graph {
 public:
  void add_input(const std::string& name, std::optional<Shape> shape = {});
  void add_param(const std::string& name, std::optional<Shape> shape = {});
  void add_layer(LayerDef def);

  // Validates the invariants and computes the evaluation order. Throws
  // GraphError on cycles, double producers or malformed layers.
  void finalize();
  bool finalized() const { return finalized_; }

  const std::vector<VarDef>& vars() const { return vars_; }
  const std::vector<LayerDef>& layers() const { return layers_; }
  const VarDef& var(const std::string& name) const;
  bool has_var(const std::string& name) const;
  const LayerDef* find_layer(const std::string& name) const;

  // Variables in computation order (inputs first), layers in firing
  // order; ties resolved by declaration order.
  const std::vector<int>& var_order() const { return var_order_; }
  const std::vector<int>& layer_order() const { return layer_order_; }

  // Variables no layer consumes.
  std::vector<std::string> sink_vars() const;
  // Variables consumed only through non-differentiable slots (labels,
  // instance weights); their derivatives are identically zero.
  const std::vector<std::string>& non_differentiable_vars() const {
    return non_diff_vars_;
  }

 private:
  int var_index(const std::string& name) const;
  int intern_var(const std::string& name, VarRole role);
  void check_layer_arity(const LayerDef& def) const;

  std::vector<VarDef> vars_;
  std::vector<LayerDef> layers_;
  std::map<std::string, int> by_name_;
  std::vector<int> var_order_;
  std::vector<int> layer_order_;
  std::vector<std::string> non_diff_vars_;
  bool finalized_ = false;
};

// Variable names in computation order (the graph owns the indices).
std::vector<std::string> toposort(const Graph& g);

// Mirror of the graph that computes all projected derivatives when
// evaluated forward: one grad layer per original layer, fed by the
// original variables and by seed variables "d:<sink>"; summation layers
// resolve variables consumed more than once. Evaluating it with the
// original values bound reproduces backward() exactly.
Graph reverse_graph(const Graph& g);

inline std::string grad_var_name(const std::string& var) { return "d:" + var; }

enum class EvalMode { train, infer };

template <class T>
using NamedTensors = std::map<std::string, Tensor<T>>;

// Forward values and accumulated projected derivatives of one
// evaluation. Each tape belongs to a single evaluation thread.
template <class T>
struct Tape {
  NamedTensors<T> values;
  NamedTensors<T> derivs;
  NamedTensors<T> aux;  // per-layer extras (batch moments), keyed by layer
  EvalMode mode = EvalMode::train;
};

// Evaluates the graph in computation order. `bindings` must cover every
// input and parameter the computation needs. When `targets` is nonempty
// only the layers those variables depend on run.
template <class T>
Tape<T> forward(const Graph& g, const NamedTensors<T>& bindings,
                EvalMode mode = EvalMode::train,
                const std::vector<std::string>& targets = {});

// Backpropagation: seeds the given output projections, then walks the
// layers in reverse order accumulating projected derivatives into
// tape.derivs for every variable, parameters included. Shared parameters
// end up with the sum of their contributions.
template <class T>
void backward(const Graph& g, Tape<T>& tape, const NamedTensors<T>& seeds);

// Runs forward and returns the value of a scalar variable.
template <class T>
T eval_scalar(const Graph& g, const NamedTensors<T>& bindings,
              const std::string& output, EvalMode mode = EvalMode::train);

struct GradCheckEntry {
  std::string var;
  double max_rel_err = 0;
  int64_t probes = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0;
};

// Central finite differences of a scalar output against backward() for
// every differentiable bound variable. Variables larger than
// `max_probes` are subsampled with the given seed.
template <class T>
GradCheckReport grad_check(const Graph& g, const NamedTensors<T>& bindings,
                           const std::string& output, T step,
                           int64_t max_probes = 64, uint64_t seed = 1);

// Relative error measure used by the checker: |a-b| over the larger
// magnitude, floored so noise on near-zero gradients is not amplified.
double fd_rel_err(double analytic, double numeric);

}  // namespace convkit
