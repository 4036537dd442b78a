#pragma once

#include <string>
#include <vector>

#include "srcsel/dataset.hpp"
#include "srcsel/random.hpp"

namespace srcsel::fixtures {

// Trials scattered around two class means by tangent noise of entry scale
// `noise`, class 1 first.
inline std::vector<Trial> two_class_trials(const SpdMatrixd& m1,
                                           const SpdMatrixd& m2, int per_class,
                                           double noise, Rng& rng) {
  std::vector<Trial> out;
  for (int label = 1; label <= 2; ++label) {
    const MatrixX<double> half = spd_sqrt(label == 1 ? m1 : m2);
    for (int i = 0; i < per_class; ++i) {
      const MatrixX<double> e = sym_exp(symmetric_gaussian(m1.dim(), noise, rng));
      out.push_back(Trial{SpdMatrixd(half * e * half), label});
    }
  }
  return out;
}

inline SubjectData subject(std::string id, std::vector<Trial> trials) {
  SubjectData s;
  s.id = std::move(id);
  s.trials = std::move(trials);
  return s;
}

// Small, quick synthetic population.
inline std::vector<SubjectData> small_population(int n_subjects,
                                                 std::uint64_t seed,
                                                 int dim = 4,
                                                 int groups = 2) {
  SynthConfig c;
  c.n_subjects = n_subjects;
  c.dim = dim;
  c.trials_per_class = 10;
  c.class_separation = 0.8;
  c.subject_dispersion = 0.3;
  c.transferability.groups = groups;
  c.seed = seed;
  return synth_generate(c);
}

}  // namespace srcsel::fixtures
