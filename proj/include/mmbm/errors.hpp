#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace mmbm {

// Every failure the library can signal. Input-side codes map to CLI exit 2,
// numerical-stage codes to exit 3.
enum class ErrorCode {
  RowSumViolation,
  NegativeRate,
  Reducible,
  BarrierOrder,
  AllBarriersDegenerateWithKappaZero,
  DegenerateModel,
  ConfigInvalid,
  SignConstraintViolated,
  SingularSystem,
  DegenerateZeroMode,
  RankDeficient,
  NotSemisimple,
  SingularA0,
  CountMismatch,
  NumericallySingular,
  RootMultiplicity,
  TooFewCycles,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::RowSumViolation: return "RowSumViolation";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::BarrierOrder: return "BarrierOrder";
    case ErrorCode::AllBarriersDegenerateWithKappaZero:
      return "AllBarriersDegenerateWithKappaZero";
    case ErrorCode::DegenerateModel: return "DegenerateModel";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::SignConstraintViolated: return "SignConstraintViolated";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DegenerateZeroMode: return "DegenerateZeroMode";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotSemisimple: return "NotSemisimple";
    case ErrorCode::SingularA0: return "SingularA0";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::NumericallySingular: return "NumericallySingular";
    case ErrorCode::RootMultiplicity: return "RootMultiplicity";
    case ErrorCode::TooFewCycles: return "TooFewCycles";
  }
  return "Unknown";
}

// True for errors caused by bad input rather than by the numerics.
inline bool is_input_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::RowSumViolation:
    case ErrorCode::NegativeRate:
    case ErrorCode::Reducible:
    case ErrorCode::BarrierOrder:
    case ErrorCode::AllBarriersDegenerateWithKappaZero:
    case ErrorCode::DegenerateModel:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::SignConstraintViolated:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string op, std::string message,
        nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(std::string(error_code_name(code)) + " in " + op +
                           ": " + message),
        code_(code),
        op_(std::move(op)),
        message_(std::move(message)),
        detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& op() const { return op_; }
  const std::string& message() const { return message_; }
  const nlohmann::json& detail() const { return detail_; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"code", error_code_name(code_)},
                          {"op", op_},
                          {"message", message_},
                          {"detail", detail_}};
  }

 private:
  ErrorCode code_;
  std::string op_;
  std::string message_;
  nlohmann::json detail_;
};

}  // namespace mmbm
