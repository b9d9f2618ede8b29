#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nids {

// Every failure carries a stable machine-readable name next to the free-form
// message. The CLI prints the name verbatim and maps it to an exit code;
// tests match on it.
class Error : public std::runtime_error {
public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(name + ": " + message), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

private:
  std::string name_;
};

[[noreturn]] inline void fail(std::string name, const std::string& message) {
  throw Error(std::move(name), message);
}

}  // namespace nids
