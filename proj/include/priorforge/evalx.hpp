#pragma once

#include <string>
#include <vector>

#include "priorforge/colorlab.hpp"
#include "priorforge/common.hpp"
#include "priorforge/raster.hpp"
#include "priorforge/synthspace.hpp"

namespace priorforge::evalx {

/// Multinomial logistic regression over frozen embeddings.
struct LinearProbe {
  Mat weight;  // classes x d
  Vec bias;    // classes
  std::vector<std::string> class_names;
  int iterations = 0;
  double final_loss = 0.0;

  Vec probabilities(const Vec& x) const;
  int predict(const Vec& x) const;
  int class_index(const std::string& name) const;
};

struct ProbeOptions {
  double l2_reg = 1e-4;
  double tolerance = 1e-6;  // on the loss change between iterations
  int max_iterations = 20000;
};

/// labels[i] indexes class_names. Throws InputError unless at least two
/// classes are present.
LinearProbe train_probe(const std::vector<Vec>& embeddings,
                        const std::vector<int>& labels,
                        const std::vector<std::string>& class_names,
                        const ProbeOptions& options = {});

/// Probe over the four domain labels, trained on record image embeddings.
LinearProbe train_domain_probe(const std::vector<synth::DatasetRecord>& records,
                               const ProbeOptions& options = {});

double domain_confidence(const LinearProbe& probe, const std::vector<Vec>& embeddings,
                         const std::string& positive_class);
double accuracy(const LinearProbe& probe, const std::vector<Vec>& embeddings,
                const std::vector<int>& labels);

/// Cosine between the pooled text vector and the image embedding.
double relevance_score(const synth::TextEmbedding& text, const synth::ImageEmbedding& image);
double cosine(const Vec& a, const Vec& b);

struct GaussianStats {
  Vec mean;
  Mat cov;
  std::size_t count = 0;

  /// Sample mean and unbiased covariance; needs at least two samples.
  static GaussianStats from_samples(const std::vector<Vec>& samples);
};

double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Whitening-coloring transform on raw RGB pixel statistics.
RasterPatch wct_rgb_transfer(const RasterPatch& src, const RasterPatch& ref);
/// Per-channel mean/std matching.
RasterPatch meanstd_transfer(const RasterPatch& src, const RasterPatch& ref);

struct ChannelMoments {
  std::array<double, 3> mean{};
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();  // population covariance
};
ChannelMoments channel_moments(const RasterPatch& p);

}  // namespace priorforge::evalx
