#pragma once

// Small synthetic datasets and models shared by the training-level tests.

#include <vector>

#include "dlm/data.hpp"
#include "dlm/model.hpp"
#include "dlm/training.hpp"

namespace dlm::testing {

inline Dataset small_synth(Index sequences = 24, Index steps = 24, std::uint64_t seed = 5) {
  SynthConfig c;
  c.sequences = sequences;
  c.steps = steps;
  c.seed = seed;
  Dataset d = synth_regime_data(c);
  d.fit_normalization();
  return d;
}

inline std::vector<Window> small_windows(Index steps = 12) {
  const Dataset d = small_synth();
  return make_windows(d.train, steps, steps);
}

inline ModelConfig small_model(Index obs_dim = 1, Index cmd_dim = 2) {
  ModelConfig c;
  c.codebooks = 3;
  c.code_dim = 4;
  c.obs_dim = obs_dim;
  c.cmd_dim = cmd_dim;
  c.encoder_hidden = 6;
  c.decoder_hidden = 6;
  c.kernel_hidden = 6;
  c.depth = 2;
  c.receptive_field = 3;
  c.seed = 21;
  return c;
}

inline TrainConfig small_train(int epochs = 4, int warmup = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.beta_warmup_epochs = warmup;
  t.batch_size = 8;
  t.learning_rate = 3e-3;
  t.temperature = {1.0, 0.9, 0.3};
  t.seed = 77;
  return t;
}

inline bool same_parameters(const MarkovCodebookModel& a, const MarkovCodebookModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->value != pb[i]->value) return false;
  }
  return true;
}

}  // namespace dlm::testing
