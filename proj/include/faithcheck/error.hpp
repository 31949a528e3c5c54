#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace faithcheck {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Config,
  MissingTable,
  MalformedRow,
  IdMismatch,
  Llm,
  MockExhausted,
  UnmatchedRequest,
  Schema,
  NoJsonFound,
  UnrepairableJson,
  NoPatientEntity,
  EmptyGraph,
  PlausibilityReject,
  IndexOutOfRange,
  DuplicateKey,
  DegenerateBase,
  LengthMismatch,
  TooFewPoints,
  EmbeddingBackend,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (the CLI,
// per-sentence failure records) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace faithcheck
