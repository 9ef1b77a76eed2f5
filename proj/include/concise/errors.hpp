#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace concise {

/// Base of every error raised by the library. `code()` is the stable,
/// machine-readable name reported by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define CONCISE_DEFINE_ERROR(Name, Base)                                  \
  class Name : public Base {                                              \
   public:                                                                \
    explicit Name(const std::string& message) : Base(#Name, message) {}  \
                                                                          \
   protected:                                                             \
    Name(std::string code, const std::string& message)                    \
        : Base(std::move(code), message) {}                               \
  };

// chain
CONCISE_DEFINE_ERROR(ChainClosed, Error)
CONCISE_DEFINE_ERROR(IndexGap, Error)
CONCISE_DEFINE_ERROR(EmptyChain, Error)

// backend; BackendError covers everything the pipeline may turn into a discard.
CONCISE_DEFINE_ERROR(BackendError, Error)
CONCISE_DEFINE_ERROR(BackendUnavailable, BackendError)
CONCISE_DEFINE_ERROR(BackendRejected, BackendError)
CONCISE_DEFINE_ERROR(BudgetExceeded, BackendError)
CONCISE_DEFINE_ERROR(ProbeUnsupported, Error)
CONCISE_DEFINE_ERROR(ScriptMiss, Error)
CONCISE_DEFINE_ERROR(InvalidRequest, Error)

// reflect
CONCISE_DEFINE_ERROR(ParseFailure, Error)
CONCISE_DEFINE_ERROR(FasUnknown, Error)

// confidence / pipeline
CONCISE_DEFINE_ERROR(EmptyPool, Error)
CONCISE_DEFINE_ERROR(EmptyGeneration, Error)

// dataset / io
CONCISE_DEFINE_ERROR(IoFailure, Error)
CONCISE_DEFINE_ERROR(SchemaMismatch, Error)

// metrics
CONCISE_DEFINE_ERROR(IndexOutOfRange, Error)
CONCISE_DEFINE_ERROR(EmptyInput, Error)
CONCISE_DEFINE_ERROR(ZeroBaseline, Error)
CONCISE_DEFINE_ERROR(BaselineMismatch, Error)

// cli
CONCISE_DEFINE_ERROR(ConfigInvalid, Error)

#undef CONCISE_DEFINE_ERROR

}  // namespace concise
