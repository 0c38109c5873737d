#pragma once

#include <stdexcept>
#include <vector>

#include "stagerec/numerics/lstm.hpp"

namespace stagerec {

/// Runs one LSTM over the stage sequence of a node table: the step-t input is
/// the stage-t table, recurrent state starts at zero, and the stage-t output
/// is the hidden state after step t. Every row (node) evolves independently
/// under the shared weights.
template <class Real>
std::vector<Tensor<Real>> shortTermEvolve(const std::vector<Tensor<Real>>& stage_tables,
                                          const LstmWeights<Real>& w) {
  if (stage_tables.empty()) {
    throw std::invalid_argument("short-term evolve: no stages");
  }
  const std::size_t n = stage_tables.front().dim(0);
  const std::size_t d = stage_tables.front().dim(1);
  Tensor<Real> h({n, d});
  Tensor<Real> c({n, d});
  std::vector<Tensor<Real>> out;
  out.reserve(stage_tables.size());
  for (const auto& x : stage_tables) {
    if (x.dim(0) != n || x.dim(1) != d) {
      throw std::invalid_argument("short-term evolve: stage tables disagree on shape: " +
                                  x.shapeString());
    }
    LstmState<Real> s = lstmCell(x, h, c, w);
    h = s.h;
    c = std::move(s.c);
    out.push_back(h);
  }
  return out;
}

/// Tape version; returns one evolved table var per stage.
template <class Real>
std::vector<typename Tape<Real>::Var> shortTermEvolveOnTape(
    Tape<Real>& tape, const std::vector<typename Tape<Real>::Var>& stage_tables,
    const LstmVars<Real>& w) {
  if (stage_tables.empty()) {
    throw std::invalid_argument("short-term evolve: no stages");
  }
  const auto& first = tape.value(stage_tables.front());
  Tensor<Real> zero({first.dim(0), first.dim(1)});
  auto h = tape.leaf(zero);
  auto c = tape.leaf(std::move(zero));
  std::vector<typename Tape<Real>::Var> out;
  out.reserve(stage_tables.size());
  for (auto x : stage_tables) {
    LstmStateVars<Real> s = lstmStep(tape, x, h, c, w);
    h = s.h;
    c = s.c;
    out.push_back(h);
  }
  return out;
}

}  // namespace stagerec
