#pragma once

#include "tqf/forest.hpp"

#include <string>

namespace tqf {

enum class FrequencyScheme { MedianTriple, DistanceQuantiles, Explicit };

std::string to_string(FrequencyScheme scheme);
FrequencyScheme frequency_scheme_from_string(const std::string& name);

/// Frequencies w_t for the (cos y/w_t, sin y/w_t) target columns. T = w.size();
/// T = 0 means no augmentation.
struct FrequencySpec {
  FrequencyScheme scheme = FrequencyScheme::Explicit;
  std::vector<double> w;

  int T() const { return static_cast<int>(w.size()); }
  void validate() const;
};

/// Per-column standardization; constant columns keep sd = 1.
struct ComponentScaler {
  std::vector<double> means;
  std::vector<double> sds;

  static ComponentScaler fit(const Matrix& columns);
  Matrix transform(const Matrix& columns) const;
  Matrix inverse(const Matrix& standardized) const;
};

/// Chooses T frequencies from pairwise |y_i - y_j| over at most
/// `subsample_cap` evenly strided rows. `explicit_w` is used only by the
/// explicit scheme.
FrequencySpec select_frequencies(std::span<const double> y, int T, FrequencyScheme scheme,
                                 std::size_t subsample_cap = 2000, const std::vector<double>& explicit_w = {});

/// Unstandardized (y, cos y/w_1, sin y/w_1, ...) columns.
Matrix augmented_columns(std::span<const double> y, const FrequencySpec& spec);

struct AugmentedTargets {
  Matrix standardized;
  ComponentScaler scaler;
};

AugmentedTargets augment_targets(std::span<const double> y, const FrequencySpec& spec);

/// Forest trained on augmented split targets; quantiles aggregate raw y.
struct QrfppModel {
  FrequencySpec spec;
  ComponentScaler scaler;
  QuantileForestModel forest;

  static QrfppModel fit(const Matrix& X, std::span<const double> y, const FrequencySpec& spec,
                        const ForestConfig& config);

  std::vector<double> predict_quantiles(std::span<const double> x, std::span<const double> levels) const {
    return forest.predict_quantiles(x, levels);
  }
};

}  // namespace tqf
