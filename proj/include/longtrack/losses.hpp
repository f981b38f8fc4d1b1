#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "longtrack/common.hpp"

namespace longtrack {

// Probabilities are clamped away from {0,1} to keep logs finite; the clamp is
// reported, never silent.
inline constexpr double kProbClamp = 1e-12;

struct ScalarLoss {
    double value = 0.0;
    double d_logit = 0.0;  // gradient wrt the pre-sigmoid logit
    bool clamped = false;
};

struct QuadLoss {
    double value = 0.0;
    std::array<double, 4> grad{0, 0, 0, 0};
    bool clamped = false;
};

namespace detail {
inline double clamp_prob(double p, bool& flagged) {
    if (p < kProbClamp) {
        flagged = true;
        return kProbClamp;
    }
    if (p > 1.0 - kProbClamp) {
        flagged = true;
        return 1.0 - kProbClamp;
    }
    return p;
}
}  // namespace detail

// Focal loss, binary form on the positive-class probability:
// positive: -alpha*(1-p)^gamma*log(p); negative: -(1-alpha)*p^gamma*log(1-p).
inline ScalarLoss focal_loss(double pred_prob, bool positive, double alpha = 0.25,
                             double gamma = 2.0) {
    ScalarLoss out;
    double p = detail::clamp_prob(pred_prob, out.clamped);
    double d_p;
    if (positive) {
        double w = std::pow(1.0 - p, gamma);
        out.value = -alpha * w * std::log(p);
        d_p = alpha * (gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p) -
                       w / p);
    } else {
        double w = std::pow(p, gamma);
        out.value = -(1.0 - alpha) * w * std::log(1.0 - p);
        d_p = -(1.0 - alpha) *
              (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) -
               w / (1.0 - p));
    }
    out.d_logit = d_p * p * (1.0 - p);
    return out;
}

inline double focal_loss_sum(std::span<const std::pair<double, bool>> samples,
                             double alpha = 0.25, double gamma = 2.0) {
    double total = 0.0;
    for (const auto& [p, positive] : samples)
        total += focal_loss(p, positive, alpha, gamma).value;
    return total;
}

// -ln(IoU) between the boxes decoded from the predicted and target
// (l,t,r,b) at a shared location. Applied to positive samples only; the case
// split lives in detection_loss assembly.
inline QuadLoss iou_loss(const std::array<double, 4>& pred,
                         const std::array<double, 4>& target) {
    for (double v : pred)
        if (v < 0.0) throw ConfigError("iou_loss: negative predicted distance");
    for (double v : target)
        if (v < 0.0) throw ConfigError("iou_loss: negative target distance");

    QuadLoss out;
    const double iw = std::min(pred[0], target[0]) + std::min(pred[2], target[2]);
    const double ih = std::min(pred[1], target[1]) + std::min(pred[3], target[3]);
    const double inter = iw * ih;
    const double ap = (pred[0] + pred[2]) * (pred[1] + pred[3]);
    const double ag = (target[0] + target[2]) * (target[1] + target[3]);
    const double uni = ap + ag - inter;
    double q = uni > 0.0 ? inter / uni : 0.0;
    if (q < kProbClamp) {
        out.clamped = true;
        out.value = -std::log(kProbClamp);
        return out;  // gradient undefined at the clamp; flagged
    }
    out.value = -std::log(q);

    // d(inter)/d(pred): the min picks pred when pred < target
    std::array<double, 4> d_inter{
        pred[0] < target[0] ? ih : 0.0, pred[1] < target[1] ? iw : 0.0,
        pred[2] < target[2] ? ih : 0.0, pred[3] < target[3] ? iw : 0.0};
    std::array<double, 4> d_ap{pred[1] + pred[3], pred[0] + pred[2],
                               pred[1] + pred[3], pred[0] + pred[2]};
    for (int k = 0; k < 4; ++k) {
        double d_uni = d_ap[k] - d_inter[k];
        out.grad[k] = -d_inter[k] / inter + d_uni / uni;
    }
    return out;
}

// Binary cross-entropy against a soft center-ness target; positives only.
inline ScalarLoss centerness_bce(double pred, double target) {
    ScalarLoss out;
    double p = detail::clamp_prob(pred, out.clamped);
    out.value = -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    out.d_logit = p - target;  // dL/dp * p(1-p)
    return out;
}

// Per-level, per-head loss weights plus the two task-balancing log-variances.
struct LossWeights {
    // [level m-3][head n]: n = 0 cls, 1 reg, 2 center-ness
    std::array<std::array<double, 3>, 3> lambda{{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}};
    std::array<double, 2> task_log_vars{0.0, 0.0};  // detection, re-id

    void validate() const {
        for (const auto& row : lambda)
            for (double v : row)
                if (v < 0.0) throw ConfigError("loss weights must be >= 0");
    }
};

// Weighted sum over levels m in {3,4,5} and heads n in {cls, reg, cns}.
inline double detection_loss(
    const std::array<std::array<std::optional<double>, 3>, 3>& terms,
    const LossWeights& weights) {
    weights.validate();
    double total = 0.0;
    for (int m = 0; m < 3; ++m) {
        for (int n = 0; n < 3; ++n) {
            if (!terms[m][n].has_value())
                throw ConfigError("detection_loss: missing term for level " +
                                  std::to_string(m + 3) + ", head " +
                                  std::to_string(n));
            total += weights.lambda[m][n] * *terms[m][n];
        }
    }
    return total;
}

// Average detection loss over the template-search pairs of one search image.
inline double cross_query_loss(std::span<const double> per_pair_losses) {
    if (per_pair_losses.empty())
        throw ConfigError("cross_query_loss: no pairs");
    double total = 0.0;
    for (double v : per_pair_losses) total += v;
    return total / static_cast<double>(per_pair_losses.size());
}

struct ReidBatch {
    int num_objects = 0;   // M
    int num_classes = 0;   // J
    int dim = 128;
    std::vector<double> embeddings;  // M x dim
    std::vector<int> labels;         // in [0, J)
    std::vector<double> classifier;  // J x dim

    void validate() const {
        if (num_objects < 1 || num_classes < 2)
            throw ConfigError("reid batch: need M >= 1 and J >= 2");
        if (embeddings.size() !=
            static_cast<std::size_t>(num_objects) * dim)
            throw ShapeError("reid batch: embeddings size mismatch");
        if (classifier.size() !=
            static_cast<std::size_t>(num_classes) * dim)
            throw ShapeError("reid batch: classifier size mismatch");
        if (labels.size() != static_cast<std::size_t>(num_objects))
            throw ShapeError("reid batch: labels size mismatch");
        for (int l : labels)
            if (l < 0 || l >= num_classes)
                throw ConfigError("reid batch: label out of range");
    }
};

struct ReidLoss {
    double value = 0.0;
    std::vector<double> d_embeddings;  // M x dim
    std::vector<double> d_classifier;  // J x dim
};

// Identity classification: sum over objects of softmax cross-entropy of
// (classifier . embedding) against the identity label.
inline ReidLoss reid_softmax_loss(const ReidBatch& batch) {
    batch.validate();
    const int M = batch.num_objects, J = batch.num_classes, D = batch.dim;
    ReidLoss out;
    out.d_embeddings.assign(static_cast<std::size_t>(M) * D, 0.0);
    out.d_classifier.assign(static_cast<std::size_t>(J) * D, 0.0);
    std::vector<double> logits(J), probs(J);
    for (int i = 0; i < M; ++i) {
        const double* e = batch.embeddings.data() + static_cast<std::size_t>(i) * D;
        double maxl = -1e300;
        for (int j = 0; j < J; ++j) {
            const double* w = batch.classifier.data() + static_cast<std::size_t>(j) * D;
            double acc = 0.0;
            for (int d = 0; d < D; ++d) acc += w[d] * e[d];
            logits[j] = acc;
            maxl = std::max(maxl, acc);
        }
        double z = 0.0;
        for (int j = 0; j < J; ++j) z += std::exp(logits[j] - maxl);
        const int label = batch.labels[i];
        out.value += -(logits[label] - maxl - std::log(z));
        for (int j = 0; j < J; ++j) {
            probs[j] = std::exp(logits[j] - maxl) / z;
            double dl = probs[j] - (j == label ? 1.0 : 0.0);
            const double* w = batch.classifier.data() + static_cast<std::size_t>(j) * D;
            double* de = out.d_embeddings.data() + static_cast<std::size_t>(i) * D;
            double* dw = out.d_classifier.data() + static_cast<std::size_t>(j) * D;
            for (int d = 0; d < D; ++d) {
                de[d] += dl * w[d];
                dw[d] += dl * e[d];
            }
        }
    }
    return out;
}

// Uncertainty-weighted total of the detection and re-id objectives:
// 0.5 * (e^{-s1} * det + e^{-s2} * reid + s1 + s2).
inline double balanced_total(double det_loss, double reid_loss, double s1,
                             double s2) {
    return 0.5 * (std::exp(-s1) * det_loss + std::exp(-s2) * reid_loss + s1 + s2);
}

// Central-difference check of an analytic gradient; returns the max relative
// error over coordinates. Callers keep the point away from clamp boundaries
// and min/max ties.
inline double grad_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_grad,
                         std::span<const double> point, double epsilon = 1e-6) {
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double saved = x[k];
        x[k] = saved + epsilon;
        double fp = f(x);
        x[k] = saved - epsilon;
        double fm = f(x);
        x[k] = saved;
        double numeric = (fp - fm) / (2.0 * epsilon);
        double denom = std::max({std::abs(numeric), std::abs(analytic_grad[k]),
                                 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic_grad[k]) / denom);
    }
    return worst;
}

}  // namespace longtrack
