#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stagerec/core/tape.hpp"
#include "stagerec/core/tensor.hpp"
#include "stagerec/data/stages.hpp"

namespace stagerec {

/// Symmetrically normalized user-item adjacency in CSR form (both
/// directions). Each edge (u, i) carries 1 / sqrt(deg(u) * deg(i)); the
/// coefficient is shared by the u->i and i->u direction.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency(std::vector<Edge> edges, std::int32_t n_users, std::int32_t n_items)
      : n_users_(n_users), n_items_(n_items) {
    if (n_users < 0 || n_items < 0) {
      throw std::invalid_argument("adjacency: negative node counts");
    }
    // Neighbor lists are filled in (user, item) order so per-node summation
    // order is index-sorted and bitwise reproducible.
    std::sort(edges.begin(), edges.end());
    std::vector<std::int32_t> deg_u(static_cast<std::size_t>(n_users), 0);
    std::vector<std::int32_t> deg_i(static_cast<std::size_t>(n_items), 0);
    for (const Edge& e : edges) {
      if (e.user < 0 || e.user >= n_users || e.item < 0 || e.item >= n_items) {
        throw std::out_of_range("adjacency: edge (" + std::to_string(e.user) + ", " +
                                std::to_string(e.item) + ") outside vocabulary");
      }
      ++deg_u[static_cast<std::size_t>(e.user)];
      ++deg_i[static_cast<std::size_t>(e.item)];
    }

    user_ptr_.assign(static_cast<std::size_t>(n_users) + 1, 0);
    item_ptr_.assign(static_cast<std::size_t>(n_items) + 1, 0);
    for (std::int32_t u = 0; u < n_users; ++u) {
      user_ptr_[static_cast<std::size_t>(u) + 1] =
          user_ptr_[static_cast<std::size_t>(u)] + deg_u[static_cast<std::size_t>(u)];
    }
    for (std::int32_t i = 0; i < n_items; ++i) {
      item_ptr_[static_cast<std::size_t>(i) + 1] =
          item_ptr_[static_cast<std::size_t>(i)] + deg_i[static_cast<std::size_t>(i)];
    }

    user_nbr_.resize(edges.size());
    user_coeff_.resize(edges.size());
    item_nbr_.resize(edges.size());
    item_coeff_.resize(edges.size());
    std::vector<std::size_t> ucur(user_ptr_.begin(), user_ptr_.end() - 1);
    std::vector<std::size_t> icur(item_ptr_.begin(), item_ptr_.end() - 1);
    for (const Edge& e : edges) {
      const double c = 1.0 / std::sqrt(static_cast<double>(deg_u[static_cast<std::size_t>(e.user)]) *
                                       static_cast<double>(deg_i[static_cast<std::size_t>(e.item)]));
      auto& up = ucur[static_cast<std::size_t>(e.user)];
      user_nbr_[up] = e.item;
      user_coeff_[up] = c;
      ++up;
      auto& ip = icur[static_cast<std::size_t>(e.item)];
      item_nbr_[ip] = e.user;
      item_coeff_[ip] = c;
      ++ip;
    }
  }

  std::int32_t nUsers() const { return n_users_; }
  std::int32_t nItems() const { return n_items_; }
  std::size_t nEdges() const { return user_nbr_.size(); }

  std::size_t userDegree(std::int32_t u) const {
    return user_ptr_.at(static_cast<std::size_t>(u) + 1) - user_ptr_.at(static_cast<std::size_t>(u));
  }
  std::size_t itemDegree(std::int32_t i) const {
    return item_ptr_.at(static_cast<std::size_t>(i) + 1) - item_ptr_.at(static_cast<std::size_t>(i));
  }

  /// Neighbor coefficients of one user, (item, coeff) pairs sorted by item.
  std::vector<std::pair<std::int32_t, double>> userNeighbors(std::int32_t u) const {
    std::vector<std::pair<std::int32_t, double>> out;
    for (std::size_t e = user_ptr_.at(static_cast<std::size_t>(u));
         e < user_ptr_.at(static_cast<std::size_t>(u) + 1); ++e) {
      out.emplace_back(user_nbr_[e], user_coeff_[e]);
    }
    return out;
  }

  /// out (U x d) += normalized aggregation of item rows into user rows.
  template <class Real>
  void accUsersFromItems(const Tensor<Real>& items, Tensor<Real>& out) const {
    checkTable(items, n_items_, "items");
    checkTable(out, n_users_, "user output");
    const std::size_t d = items.dim(1);
    for (std::int32_t u = 0; u < n_users_; ++u) {
      Real* dst = out.row(static_cast<std::size_t>(u));
      for (std::size_t e = user_ptr_[static_cast<std::size_t>(u)];
           e < user_ptr_[static_cast<std::size_t>(u) + 1]; ++e) {
        const Real c = static_cast<Real>(user_coeff_[e]);
        const Real* src = items.row(static_cast<std::size_t>(user_nbr_[e]));
        for (std::size_t j = 0; j < d; ++j) dst[j] += c * src[j];
      }
    }
  }

  /// out (I x d) += normalized aggregation of user rows into item rows.
  template <class Real>
  void accItemsFromUsers(const Tensor<Real>& users, Tensor<Real>& out) const {
    checkTable(users, n_users_, "users");
    checkTable(out, n_items_, "item output");
    const std::size_t d = users.dim(1);
    for (std::int32_t i = 0; i < n_items_; ++i) {
      Real* dst = out.row(static_cast<std::size_t>(i));
      for (std::size_t e = item_ptr_[static_cast<std::size_t>(i)];
           e < item_ptr_[static_cast<std::size_t>(i) + 1]; ++e) {
        const Real c = static_cast<Real>(item_coeff_[e]);
        const Real* src = users.row(static_cast<std::size_t>(item_nbr_[e]));
        for (std::size_t j = 0; j < d; ++j) dst[j] += c * src[j];
      }
    }
  }

 private:
  template <class Real>
  void checkTable(const Tensor<Real>& t, std::int32_t rows, const char* name) const {
    if (t.rank() != 2 || t.dim(0) != static_cast<std::size_t>(rows)) {
      throw std::invalid_argument(std::string("adjacency: ") + name + " table " + t.shapeString() +
                                  " does not match " + std::to_string(rows) + " nodes");
    }
  }

  std::int32_t n_users_, n_items_;
  std::vector<std::size_t> user_ptr_, item_ptr_;
  std::vector<std::int32_t> user_nbr_, item_nbr_;
  std::vector<double> user_coeff_, item_coeff_;
};

template <class Real>
struct PropagationLayers {
  std::vector<Tensor<Real>> users;  // L+1 entries, layer 0 = input
  std::vector<Tensor<Real>> items;
  Tensor<Real> user_sum;  // unweighted sum over layers 0..L
  Tensor<Real> item_sum;
};

/// One message-passing hop (no transforms, no nonlinearity).
template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> propagateOnce(const NormalizedAdjacency& adj,
                                                    const Tensor<Real>& users,
                                                    const Tensor<Real>& items) {
  Tensor<Real> next_users({static_cast<std::size_t>(adj.nUsers()), users.dim(1)});
  Tensor<Real> next_items({static_cast<std::size_t>(adj.nItems()), items.dim(1)});
  adj.accUsersFromItems(items, next_users);
  adj.accItemsFromUsers(users, next_items);
  return {std::move(next_users), std::move(next_items)};
}

/// L propagation hops from the given layer-0 tables, plus the layer sum
/// e = sum_{l=0..L} e^(l).
template <class Real>
PropagationLayers<Real> propagateLayers(const NormalizedAdjacency& adj, Tensor<Real> users0,
                                        Tensor<Real> items0, std::size_t n_layers) {
  PropagationLayers<Real> out;
  out.user_sum = users0;
  out.item_sum = items0;
  out.users.push_back(std::move(users0));
  out.items.push_back(std::move(items0));
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto [u, i] = propagateOnce(adj, out.users.back(), out.items.back());
    for (std::size_t k = 0; k < u.size(); ++k) out.user_sum[k] += u[k];
    for (std::size_t k = 0; k < i.size(); ++k) out.item_sum[k] += i[k];
    out.users.push_back(std::move(u));
    out.items.push_back(std::move(i));
  }
  return out;
}

// -- tape variant -------------------------------------------------------------

namespace detail {

/// Reverse sweep of the layer-sum propagation. Given gradients flowing into
/// the user sum and item sum, accumulates the gradients w.r.t. the layer-0
/// tables. The adjacency is symmetric per edge, so the adjoint of the
/// item->user hop is the user->item hop.
template <class Real>
void propagationSumBackward(const NormalizedAdjacency& adj, std::size_t n_layers,
                            const Tensor<Real>* g_user_sum, const Tensor<Real>* g_item_sum,
                            Tensor<Real>& g_users0, Tensor<Real>& g_items0) {
  Tensor<Real> gu({static_cast<std::size_t>(adj.nUsers()), g_users0.dim(1)});
  Tensor<Real> gi({static_cast<std::size_t>(adj.nItems()), g_items0.dim(1)});
  auto addIn = [](Tensor<Real>& dst, const Tensor<Real>* src) {
    if (!src) return;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (*src)[k];
  };
  // Layer L receives only the direct sum gradient.
  addIn(gu, g_user_sum);
  addIn(gi, g_item_sum);
  for (std::size_t l = n_layers; l-- > 0;) {
    // Pull the layer-(l+1) gradients one hop back, then add the direct sum
    // gradient that layer l receives.
    Tensor<Real> pu({gu.dim(0), gu.dim(1)});
    Tensor<Real> pi({gi.dim(0), gi.dim(1)});
    adj.accUsersFromItems(gi, pu);
    adj.accItemsFromUsers(gu, pi);
    gu = std::move(pu);
    gi = std::move(pi);
    addIn(gu, g_user_sum);
    addIn(gi, g_item_sum);
  }
  for (std::size_t k = 0; k < gu.size(); ++k) g_users0[k] += gu[k];
  for (std::size_t k = 0; k < gi.size(); ++k) g_items0[k] += gi[k];
}

}  // namespace detail

/// Layer-sum propagation as a tape op. Returns (user table, item table)
/// vars. The adjacency must outlive the tape.
template <class Real>
std::pair<typename Tape<Real>::Var, typename Tape<Real>::Var> propagationSumOnTape(
    Tape<Real>& tape, const NormalizedAdjacency& adj, typename Tape<Real>::Var users0,
    typename Tape<Real>::Var items0, std::size_t n_layers) {
  PropagationLayers<Real> fwd =
      propagateLayers(adj, tape.value(users0), tape.value(items0), n_layers);

  auto user_sum = tape.apply(
      std::move(fwd.user_sum), [&adj, users0, items0, n_layers](Tape<Real>& t, const Tensor<Real>& g) {
        detail::propagationSumBackward<Real>(adj, n_layers, &g, nullptr, t.gradBuffer(users0),
                                             t.gradBuffer(items0));
      });
  auto item_sum = tape.apply(
      std::move(fwd.item_sum), [&adj, users0, items0, n_layers](Tape<Real>& t, const Tensor<Real>& g) {
        detail::propagationSumBackward<Real>(adj, n_layers, nullptr, &g, t.gradBuffer(users0),
                                             t.gradBuffer(items0));
      });
  return {user_sum, item_sum};
}

}  // namespace stagerec
