#pragma once

#include <string>
#include <utility>

#include "flowstyle/numerics/graph.hpp"
#include "flowstyle/numerics/rng.hpp"

// Small parameterised building blocks. Each block owns only its name and
// sizes; the weights live in a ParamStore under "<name>/...".
namespace flowstyle::nn {

/// Glorot-uniform matrix of shape rows x cols.
Tensor glorot(RngStream& rng, std::size_t rows, std::size_t cols);

struct Linear {
  std::string name;
  int in = 0;
  int out = 0;

  void init(ParamStore& ps, RngStream& rng, double bias = 0.0) const;
  void init_zero(ParamStore& ps) const;
  Var operator()(Graph& g, const ParamStore& ps, Var x) const;
};

/// GRU cell, gate order (reset, update, candidate).
struct GruCell {
  std::string name;
  int in = 0;
  int hidden = 0;

  void init(ParamStore& ps, RngStream& rng) const;
  /// W_x x + b_x for a whole sequence at once (3H x cols).
  Var project_input(Graph& g, const ParamStore& ps, Var x) const;
  Var step_projected(Graph& g, const ParamStore& ps, Var gx, Var h) const;
  Var step(Graph& g, const ParamStore& ps, Var x, Var h) const {
    return step_projected(g, ps, project_input(g, ps, x), h);
  }
};

/// LSTM cell, gate order (input, forget, cell, output); forget bias 1.
struct LstmCell {
  std::string name;
  int in = 0;
  int hidden = 0;

  void init(ParamStore& ps, RngStream& rng) const;
  Var project_input(Graph& g, const ParamStore& ps, Var x) const;
  /// Returns (h, c).
  std::pair<Var, Var> step_projected(Graph& g, const ParamStore& ps, Var gx, Var h, Var c) const;
};

}  // namespace flowstyle::nn
