#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace lla {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 7);

    std::size_t classes() const { return k_; }
    std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
        return counts_[truth * k_ + predicted];
    }
    std::uint64_t& operator()(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }

    void update(int truth, int predicted);
    /// Elementwise sum; class counts must agree.
    void merge(const ConfusionMatrix& other);

    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t i) const;
    std::uint64_t col_sum(std::size_t j) const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

struct MetricSummary {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;  // recall per class
    std::vector<double> per_class_f1;
    double macro_f1 = 0.0;
};

/// 0/0 in precision, recall or F1 counts as 0. Throws on an empty matrix.
MetricSummary summarize(const ConfusionMatrix& cm);

/// 0.67 * macro_f1 + 0.33 * accuracy; both arguments must lie in [0, 1].
double challenge_score(double accuracy, double macro_f1);

/// {per_class, accuracy, macro_f1, score, confusion}
nlohmann::ordered_json metrics_report(const ConfusionMatrix& cm);

}  // namespace lla
