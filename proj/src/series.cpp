#include "dlm/series.hpp"

#include "dlm/error.hpp"

namespace dlm {

SeriesBatch make_batch(std::span<const Window> windows, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: no windows selected");
  const Window& first = windows[indices.front()];
  const Index steps = first.x.rows();
  const Index d = first.x.cols();
  const Index q = first.u.cols();
  const Index b = static_cast<Index>(indices.size());
  SeriesBatch batch;
  batch.x.assign(static_cast<std::size_t>(steps), Matrix(b, d));
  batch.u.assign(static_cast<std::size_t>(steps), Matrix(b, q));
  for (Index i = 0; i < b; ++i) {
    const Window& w = windows[indices[static_cast<std::size_t>(i)]];
    if (w.x.rows() != steps || w.u.rows() != steps || w.x.cols() != d || w.u.cols() != q) {
      throw DimensionError("make_batch: window shapes differ");
    }
    for (Index t = 0; t < steps; ++t) {
      batch.x[static_cast<std::size_t>(t)].row(i) = w.x.row(t);
      batch.u[static_cast<std::size_t>(t)].row(i) = w.u.row(t);
    }
  }
  return batch;
}

SeriesBatch make_batch(std::span<const Window> windows) {
  std::vector<std::size_t> all(windows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(windows, all);
}

}  // namespace dlm
