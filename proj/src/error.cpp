#include "neurstrat/error.hpp"

namespace neurstrat {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArchitecture: return "InvalidArchitecture";
    case ErrorKind::Shape: return "Shape";
    case ErrorKind::Numeric: return "Numeric";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateLatent: return "DegenerateLatent";
    case ErrorKind::RejectionBudget: return "RejectionBudget";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::InfeasibleBudget: return "InfeasibleBudget";
    case ErrorKind::DegenerateLowFidelity: return "DegenerateLowFidelity";
    case ErrorKind::Domain: return "Domain";
    case ErrorKind::Estimation: return "Estimation";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace neurstrat
