#ifndef SUBPIX_TYPES_HPP
#define SUBPIX_TYPES_HPP

#include <Eigen/Dense>

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace subpix {

// Margin enforcing the strict "abundances sum below one" constraint.
inline constexpr double kAbundanceSumMargin = 1e-6;

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (bad flags, malformed abundances, ...).
struct config_error : error {
  using error::error;
};

// Malformed or inconsistent input data (files, dimension mismatches, ...).
struct data_error : error {
  using error::error;
};

// Background statistics are singular: not enough secondary data, or the
// secondary pixels are degenerate.
struct singular_statistics_error : error {
  using error::error;
};

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m,
                           const char* what) {
  if (!m.allFinite()) throw data_error(std::string(what) + ": non-finite values");
}

// Fill-factor vector: entries are nonnegative and their sum stays strictly
// below one (with kAbundanceSumMargin slack), so the background fraction is
// always positive.
class AbundanceVector {
 public:
  explicit AbundanceVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (values_.size() < 1) throw config_error("abundance vector: empty");
    if (!values_.allFinite()) throw config_error("abundance vector: non-finite entry");
    sum_ = 0.0;
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (values_[i] < 0.0)
        throw config_error("abundance vector: negative entry at index " +
                           std::to_string(i));
      sum_ += values_[i];
    }
    if (sum_ > 1.0 - kAbundanceSumMargin)
      throw config_error("abundance vector: sum " + std::to_string(sum_) +
                         " exceeds 1 - margin");
  }

  static AbundanceVector zeros(int r) {
    return AbundanceVector(Eigen::VectorXd::Zero(r));
  }

  const Eigen::VectorXd& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  double sum() const { return sum_; }
  // Fraction of the pixel left to the background, always in (0, 1].
  double background() const { return 1.0 - sum_; }

 private:
  Eigen::VectorXd values_;
  double sum_ = 0.0;
};

// Columns are endmember spectral signatures over the retained bands.
class EndmemberLibrary {
 public:
  EndmemberLibrary(Eigen::MatrixXd signatures, std::vector<std::string> names)
      : signatures_(std::move(signatures)), names_(std::move(names)) {
    if (signatures_.cols() < 1) throw config_error("endmember library: no signatures");
    if (static_cast<Eigen::Index>(names_.size()) != signatures_.cols())
      throw config_error("endmember library: name count does not match columns");
    require_finite(signatures_, "endmember library");
    std::set<std::string> seen;
    for (const auto& n : names_)
      if (!seen.insert(n).second)
        throw config_error("endmember library: duplicate name '" + n + "'");
  }

  const Eigen::MatrixXd& signatures() const { return signatures_; }
  const std::vector<std::string>& names() const { return names_; }
  int bands() const { return static_cast<int>(signatures_.rows()); }
  int count() const { return static_cast<int>(signatures_.cols()); }

 private:
  Eigen::MatrixXd signatures_;
  std::vector<std::string> names_;
};

}  // namespace subpix

#endif  // SUBPIX_TYPES_HPP
