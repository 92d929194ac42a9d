#pragma once

#include <stdexcept>
#include <string>

namespace saev {

// Bad user input: malformed files, inconsistent configuration, out-of-range
// parameters. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NetworkErrorKind { malformed, dangling_endpoint, disconnected };

class NetworkError : public ConfigError {
 public:
  NetworkError(NetworkErrorKind kind, const std::string& what)
      : ConfigError(what), kind_(kind) {}

  NetworkErrorKind kind() const noexcept { return kind_; }

 private:
  NetworkErrorKind kind_;
};

}  // namespace saev
