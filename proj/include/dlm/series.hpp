#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dlm/autodiff.hpp"

namespace dlm {

// One aligned window: observations x (T x d) and commands u (T x q).
struct Window {
  Matrix x;
  Matrix u;

  Index steps() const { return x.rows(); }
};

// Time-major batch: x[t] is B x d and u[t] is B x q.
struct SeriesBatch {
  std::vector<Matrix> x;
  std::vector<Matrix> u;

  Index batch() const { return x.empty() ? 0 : x.front().rows(); }
  Index steps() const { return static_cast<Index>(x.size()); }
};

SeriesBatch make_batch(std::span<const Window> windows);
SeriesBatch make_batch(std::span<const Window> windows, std::span<const std::size_t> indices);

}  // namespace dlm
