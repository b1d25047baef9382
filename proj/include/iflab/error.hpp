#pragma once
#include <stdexcept>
#include <string>

namespace iflab {

// Every throwing operation in the library raises Error with one of these
// codes, so callers (and tests) can discriminate failures without parsing
// message text.
enum class Errc {
  NegativeMass,
  SumNotOne,
  DuplicateAtom,
  InvalidAtom,
  UnknownVariable,
  EpsOutOfRange,
  StepOutOfRange,
  EvalFailure,
  ZeroConditioningMass,
  SyntaxError,
  UnboundVariable,
  RedeclaredBoundVariable,
  UnsupportedNode,
  UnknownFunctional,
  UnknownDgp,
  PositivityViolation,
  QuadratureFailure,
  KTooLarge,
  KOutOfRange,
  BandwidthOutOfRange,
  EmptyData,
  EmptyGrid,
  BadLearnerSpec,
  MissingColumn,
  FoldTooSmall,
  WeakDenominator,
  TruthUnavailable,
  BadConfig,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NegativeMass: return "NegativeMass";
    case Errc::SumNotOne: return "SumNotOne";
    case Errc::DuplicateAtom: return "DuplicateAtom";
    case Errc::InvalidAtom: return "InvalidAtom";
    case Errc::UnknownVariable: return "UnknownVariable";
    case Errc::EpsOutOfRange: return "EpsOutOfRange";
    case Errc::StepOutOfRange: return "StepOutOfRange";
    case Errc::EvalFailure: return "EvalFailure";
    case Errc::ZeroConditioningMass: return "ZeroConditioningMass";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnboundVariable: return "UnboundVariable";
    case Errc::RedeclaredBoundVariable: return "RedeclaredBoundVariable";
    case Errc::UnsupportedNode: return "UnsupportedNode";
    case Errc::UnknownFunctional: return "UnknownFunctional";
    case Errc::UnknownDgp: return "UnknownDgp";
    case Errc::PositivityViolation: return "PositivityViolation";
    case Errc::QuadratureFailure: return "QuadratureFailure";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::BandwidthOutOfRange: return "BandwidthOutOfRange";
    case Errc::EmptyData: return "EmptyData";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::BadLearnerSpec: return "BadLearnerSpec";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::FoldTooSmall: return "FoldTooSmall";
    case Errc::WeakDenominator: return "WeakDenominator";
    case Errc::TruthUnavailable: return "TruthUnavailable";
    case Errc::BadConfig: return "BadConfig";
    case Errc::IoError: return "IoError";
  }
  return "Error";
}

struct Error : std::runtime_error {
  Errc code;
  Error(Errc c, const std::string& msg)
      : std::runtime_error(std::string(errc_name(c)) + ": " + msg), code(c) {}
};

[[noreturn]] inline void fail(Errc c, const std::string& msg) {
  throw Error(c, msg);
}

}  // namespace iflab
