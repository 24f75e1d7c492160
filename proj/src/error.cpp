#include "drcrt/error.hpp"

namespace drcrt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonBinaryArm: return "NonBinaryArm";
    case ErrorKind::ArmVariesWithinCluster: return "ArmVariesWithinCluster";
    case ErrorKind::NegativeTime: return "NegativeTime";
    case ErrorKind::SingleArmDataset: return "SingleArmDataset";
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::UnknownTerm: return "UnknownTerm";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NoEventsInRole: return "NoEventsInRole";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::NoSubjectsInArm: return "NoSubjectsInArm";
    case ErrorKind::CensoringSurvivalUnderflow: return "CensoringSurvivalUnderflow";
    case ErrorKind::OracleArmMismatch: return "OracleArmMismatch";
    case ErrorKind::RatioDenominatorZero: return "RatioDenominatorZero";
    case ErrorKind::TauBeyondGrid: return "TauBeyondGrid";
    case ErrorKind::LeaveOneOutInfeasible: return "LeaveOneOutInfeasible";
    case ErrorKind::StudyAborted: return "StudyAborted";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConvergence:
    case ErrorKind::SingularInformation:
      return 3;
    case ErrorKind::LeaveOneOutInfeasible:
      return 4;
    case ErrorKind::Io:
    case ErrorKind::StudyAborted:
    case ErrorKind::CensoringSurvivalUnderflow:
      return 1;
    default:
      return 2;
  }
}

}  // namespace drcrt
