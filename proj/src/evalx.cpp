#include "priorforge/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace priorforge::evalx {

namespace {

Mat stack_rows(const std::vector<Vec>& xs) {
  Mat X(static_cast<Eigen::Index>(xs.size()), xs.front().size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != X.cols()) throw InputError("embedding dimensions differ");
    X.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  }
  return X;
}

// Mean cross-entropy + 0.5 * l2 * ||W||^2; fills gradients when requested.
double probe_objective(const Mat& X, const std::vector<int>& y, const Mat& W,
                       const Vec& b, double l2, Mat* gW, Vec* gb) {
  const auto n = X.rows();
  Mat logits = X * W.transpose();
  logits.rowwise() += b.transpose();
  double loss = 0.0;
  Mat dlogits(n, W.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    loss += std::log(z) + mx - logits(i, y[i]);
    dlogits.row(i) = e / z;
    dlogits(i, y[i]) -= 1.0;
  }
  loss = loss / n + 0.5 * l2 * W.squaredNorm();
  if (gW) *gW = dlogits.transpose() * X / static_cast<double>(n) + l2 * W;
  if (gb) *gb = dlogits.colwise().sum().transpose() / static_cast<double>(n);
  return loss;
}

Eigen::Matrix3d sym_power(const Eigen::Matrix3d& m, double power, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (m + m.transpose()));
  const Eigen::Vector3d ev = es.eigenvalues().cwiseMax(floor).array().pow(power);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Vec LinearProbe::probabilities(const Vec& x) const {
  if (x.size() != weight.cols()) throw InputError("probe input dimension mismatch");
  Vec logits = weight * x + bias;
  logits.array() -= logits.maxCoeff();
  Vec p = logits.array().exp();
  return p / p.sum();
}

int LinearProbe::predict(const Vec& x) const {
  Eigen::Index best = 0;
  probabilities(x).maxCoeff(&best);
  return static_cast<int>(best);
}

int LinearProbe::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  if (it == class_names.end()) throw InputError("probe has no class '" + name + "'");
  return static_cast<int>(it - class_names.begin());
}

LinearProbe train_probe(const std::vector<Vec>& embeddings, const std::vector<int>& labels,
                        const std::vector<std::string>& class_names,
                        const ProbeOptions& options) {
  if (embeddings.empty() || embeddings.size() != labels.size())
    throw InputError("probe needs matching non-empty embeddings and labels");
  const int classes = static_cast<int>(class_names.size());
  std::set<int> present;
  for (int l : labels) {
    if (l < 0 || l >= classes) throw InputError("probe label out of range");
    present.insert(l);
  }
  if (present.size() < 2) throw InputError("probe training needs at least two classes");

  const Mat X = stack_rows(embeddings);
  LinearProbe probe;
  probe.class_names = class_names;
  probe.weight = Mat::Zero(classes, X.cols());
  probe.bias = Vec::Zero(classes);

  // Gradient descent with Armijo backtracking and step growth.
  double step = 1.0;
  Mat gW;
  Vec gb;
  double loss = probe_objective(X, labels, probe.weight, probe.bias, options.l2_reg, &gW, &gb);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const double gnorm2 = gW.squaredNorm() + gb.squaredNorm();
    double next = 0.0;
    Mat W2;
    Vec b2;
    while (true) {
      W2 = probe.weight - step * gW;
      b2 = probe.bias - step * gb;
      next = probe_objective(X, labels, W2, b2, options.l2_reg, nullptr, nullptr);
      if (next <= loss - 0.5 * step * gnorm2 || step < 1e-12) break;
      step *= 0.5;
    }
    probe.weight = std::move(W2);
    probe.bias = std::move(b2);
    const double delta = loss - next;
    loss = probe_objective(X, labels, probe.weight, probe.bias, options.l2_reg, &gW, &gb);
    step *= 1.5;
    if (std::abs(delta) < options.tolerance) break;
  }
  if (!probe.weight.allFinite()) throw NumericError("probe training diverged");
  probe.iterations = it;
  probe.final_loss = loss;
  return probe;
}

LinearProbe train_domain_probe(const std::vector<synth::DatasetRecord>& records,
                               const ProbeOptions& options) {
  std::vector<Vec> xs;
  std::vector<int> ys;
  for (const auto& r : records) {
    xs.push_back(r.image.vec);
    ys.push_back(static_cast<int>(r.domain));
  }
  std::vector<std::string> names;
  for (int d = 0; d < synth::kDomainCount; ++d)
    names.emplace_back(synth::domain_name(static_cast<synth::Domain>(d)));
  return train_probe(xs, ys, names, options);
}

double domain_confidence(const LinearProbe& probe, const std::vector<Vec>& embeddings,
                         const std::string& positive_class) {
  const int k = probe.class_index(positive_class);
  if (embeddings.empty()) throw InputError("domain_confidence needs embeddings");
  double total = 0.0;
  for (const auto& e : embeddings) total += probe.probabilities(e)[k];
  return total / static_cast<double>(embeddings.size());
}

double accuracy(const LinearProbe& probe, const std::vector<Vec>& embeddings,
                const std::vector<int>& labels) {
  if (embeddings.empty() || embeddings.size() != labels.size())
    throw InputError("accuracy needs matching non-empty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    hits += probe.predict(embeddings[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(embeddings.size());
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InputError("cosine of vectors with different sizes");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw InputError("cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double relevance_score(const synth::TextEmbedding& text, const synth::ImageEmbedding& image) {
  return cosine(text.pooled, image.vec);
}

GaussianStats GaussianStats::from_samples(const std::vector<Vec>& samples) {
  if (samples.size() < 2) throw InputError("Gaussian fit needs at least two samples");
  const Mat X = stack_rows(samples);
  GaussianStats s;
  s.count = samples.size();
  s.mean = X.colwise().mean().transpose();
  const Mat centered = X.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(samples.size() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() ||
      a.cov.rows() != a.mean.size())
    throw InputError("Gaussian stats dimensions differ");
  // tr((A B)^{1/2}) = tr((A^{1/2} B A^{1/2})^{1/2}); the inner product is symmetric.
  Eigen::SelfAdjointEigenSolver<Mat> ea(0.5 * (a.cov + a.cov.transpose()));
  const Vec la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Mat sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  Mat inner = sqrt_a * b.cov * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                   2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

ChannelMoments channel_moments(const RasterPatch& p) {
  if (p.pixel_count() == 0) throw InputError("empty patch");
  ChannelMoments m;
  const double n = static_cast<double>(p.pixel_count());
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    const auto c = p.pixel(i);
    mu += Eigen::Vector3d(c[0], c[1], c[2]);
  }
  mu /= n;
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    const auto c = p.pixel(i);
    const Eigen::Vector3d x = Eigen::Vector3d(c[0], c[1], c[2]) - mu;
    m.cov += x * x.transpose();
  }
  m.cov /= n;
  m.mean = {mu[0], mu[1], mu[2]};
  return m;
}

RasterPatch wct_rgb_transfer(const RasterPatch& src, const RasterPatch& ref) {
  const auto ms = channel_moments(src);
  const auto mr = channel_moments(ref);
  const Eigen::Matrix3d whiten = sym_power(ms.cov, -0.5, 1e-8);
  const Eigen::Matrix3d color = sym_power(mr.cov, 0.5, 0.0);
  const Eigen::Matrix3d T = color * whiten;
  const Eigen::Vector3d mu_s(ms.mean[0], ms.mean[1], ms.mean[2]);
  const Eigen::Vector3d mu_r(mr.mean[0], mr.mean[1], mr.mean[2]);
  RasterPatch out = src;
  for (std::size_t i = 0; i < src.pixel_count(); ++i) {
    const auto c = src.pixel(i);
    const Eigen::Vector3d y = T * (Eigen::Vector3d(c[0], c[1], c[2]) - mu_s) + mu_r;
    for (int k = 0; k < 3; ++k) out.pixels[3 * i + k] = std::clamp(y[k], 0.0, 1.0);
  }
  return out;
}

RasterPatch meanstd_transfer(const RasterPatch& src, const RasterPatch& ref) {
  const auto ms = channel_moments(src);
  const auto mr = channel_moments(ref);
  RasterPatch out = src;
  for (int k = 0; k < 3; ++k) {
    const double ss = std::max(std::sqrt(ms.cov(k, k)), 1e-8);
    const double sr = std::sqrt(mr.cov(k, k));
    for (std::size_t i = 0; i < src.pixel_count(); ++i) {
      const double x = src.pixels[3 * i + k];
      out.pixels[3 * i + k] = std::clamp((x - ms.mean[k]) * (sr / ss) + mr.mean[k], 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace priorforge::evalx
