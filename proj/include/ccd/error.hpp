#pragma once

#include <stdexcept>
#include <string>

namespace ccd {

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  MissingColumn,
  UnknownColumn,
  ValueOutOfDomain,
  EmptyTable,
  TargetNotInSchema,
  DivisionByZeroFault,
  TooFewVariables,
  NoIntervenableOption,
  IntractableEnumeration,
  NoFaultObserved,
  EvaluatorFailure,
  IncompleteAssignment,
  UnreachableNfp,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ccd
