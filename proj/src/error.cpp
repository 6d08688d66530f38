#include "ccd/error.hpp"

namespace ccd {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::MissingColumn: return "missing_column";
    case ErrorCode::UnknownColumn: return "unknown_column";
    case ErrorCode::ValueOutOfDomain: return "value_out_of_domain";
    case ErrorCode::EmptyTable: return "empty_table";
    case ErrorCode::TargetNotInSchema: return "target_not_in_schema";
    case ErrorCode::DivisionByZeroFault: return "division_by_zero_fault";
    case ErrorCode::TooFewVariables: return "too_few_variables";
    case ErrorCode::NoIntervenableOption: return "no_intervenable_option";
    case ErrorCode::IntractableEnumeration: return "intractable_enumeration";
    case ErrorCode::NoFaultObserved: return "no_fault_observed";
    case ErrorCode::EvaluatorFailure: return "evaluator_failure";
    case ErrorCode::IncompleteAssignment: return "incomplete_assignment";
    case ErrorCode::UnreachableNfp: return "unreachable_nfp";
  }
  return "unknown";
}

}  // namespace ccd
