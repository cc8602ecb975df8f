#pragma once

#include <stdexcept>
#include <string>

namespace mipruner {

enum class ErrorKind { invalid_parameter, invalid_data, numerical, training };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct InvalidParameter : Error {
  explicit InvalidParameter(const std::string& what) : Error(ErrorKind::invalid_parameter, what) {}
};

struct InvalidData : Error {
  explicit InvalidData(const std::string& what) : Error(ErrorKind::invalid_data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error(ErrorKind::training, what) {}
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid_parameter";
    case ErrorKind::invalid_data: return "invalid_data";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::training: return "training";
  }
  return "unknown";
}

}  // namespace mipruner
