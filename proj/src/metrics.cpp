#include "lla/metrics.hpp"

#include <stdexcept>
#include <string>

namespace lla {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
    if (classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
}

void ConfusionMatrix::update(int truth, int predicted) {
    const auto k = static_cast<int>(k_);
    if (truth < 0 || truth >= k || predicted < 0 || predicted >= k) {
        throw std::out_of_range("ConfusionMatrix: label pair (" + std::to_string(truth) + ", " +
                                std::to_string(predicted) + ") outside [0, " + std::to_string(k_) + ")");
    }
    ++counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("ConfusionMatrix: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < k_; ++j) t += (*this)(i, j);
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < k_; ++i) t += (*this)(i, j);
    return t;
}

MetricSummary summarize(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("summarize: empty confusion matrix");
    const std::size_t k = cm.classes();
    MetricSummary s;
    s.per_class_accuracy.resize(k);
    s.per_class_f1.resize(k);
    double trace = 0.0;
    double f1_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto tp = static_cast<double>(cm(i, i));
        trace += tp;
        const double recall = ratio(tp, static_cast<double>(cm.row_sum(i)));
        const double precision = ratio(tp, static_cast<double>(cm.col_sum(i)));
        s.per_class_accuracy[i] = recall;
        s.per_class_f1[i] = ratio(2.0 * precision * recall, precision + recall);
        f1_sum += s.per_class_f1[i];
    }
    s.accuracy = trace / static_cast<double>(total);
    s.macro_f1 = f1_sum / static_cast<double>(k);
    return s;
}

double challenge_score(double accuracy, double macro_f1) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw std::out_of_range("challenge_score: accuracy " + std::to_string(accuracy) + " outside [0, 1]");
    }
    if (!(macro_f1 >= 0.0 && macro_f1 <= 1.0)) {
        throw std::out_of_range("challenge_score: F1 " + std::to_string(macro_f1) + " outside [0, 1]");
    }
    return 0.67 * macro_f1 + 0.33 * accuracy;
}

nlohmann::ordered_json metrics_report(const ConfusionMatrix& cm) {
    const MetricSummary s = summarize(cm);
    nlohmann::ordered_json j;
    j["per_class"] = s.per_class_accuracy;
    j["accuracy"] = s.accuracy;
    j["macro_f1"] = s.macro_f1;
    j["score"] = challenge_score(s.accuracy, s.macro_f1);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t jj = 0; jj < cm.classes(); ++jj) row.push_back(cm(i, jj));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

}  // namespace lla
