#ifndef PCFLOW_COMMON_HPP
#define PCFLOW_COMMON_HPP

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace pcflow {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using Index = Eigen::Index;

/// Base for every error the library throws. The category decides the CLI
/// exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { argument, data, numeric, format };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& what)
      : Error(Category::argument, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(Category::numeric, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what)
      : Error(Category::format, what) {}
};

}  // namespace pcflow

#endif  // PCFLOW_COMMON_HPP
