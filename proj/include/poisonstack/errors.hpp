#pragma once

#include <stdexcept>
#include <string>

namespace poisonstack {

// Base of every error the library throws. what() carries a human-readable
// message; kind() a stable short tag usable in tests and CLI exit paths.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define POISONSTACK_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

POISONSTACK_DEFINE_ERROR(DuplicateEntry)
POISONSTACK_DEFINE_ERROR(DimensionError)
POISONSTACK_DEFINE_ERROR(NumericError)
POISONSTACK_DEFINE_ERROR(SchemaError)
POISONSTACK_DEFINE_ERROR(LengthError)
POISONSTACK_DEFINE_ERROR(LabelRangeError)
POISONSTACK_DEFINE_ERROR(FormatError)
POISONSTACK_DEFINE_ERROR(TruncationError)
POISONSTACK_DEFINE_ERROR(ConfigError)
POISONSTACK_DEFINE_ERROR(StratifyError)
POISONSTACK_DEFINE_ERROR(EmptyValidation)
POISONSTACK_DEFINE_ERROR(IoError)

#undef POISONSTACK_DEFINE_ERROR

// Wraps an error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& cause)
      : Error("StageError", stage + " -> " + cause.what()),
        stage_(stage),
        cause_kind_(cause.kind()) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& cause_kind() const noexcept { return cause_kind_; }

 private:
  std::string stage_;
  std::string cause_kind_;
};

}  // namespace poisonstack
