#include "spdc/error.hpp"

#include <sstream>

namespace spdc {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::parse: return "parse";
    case ErrorKind::classical_regime: return "classical_regime";
    case ErrorKind::physicality: return "physicality";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::degenerate_input: return "degenerate_input";
    case ErrorKind::support: return "support";
    case ErrorKind::sub_poissonian: return "sub_poissonian";
  }
  return "unknown";
}

bool is_numerical(ErrorKind kind) noexcept {
  return kind != ErrorKind::validation && kind != ErrorKind::parse;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

namespace {
std::string truncation_message(double tail_mass, double bound) {
  std::ostringstream os;
  os << "truncation leaves tail mass " << tail_mass << " above bound " << bound;
  return os.str();
}
}  // namespace

TruncationError::TruncationError(double tail_mass, double bound)
    : Error(ErrorKind::truncation, truncation_message(tail_mass, bound)),
      tail_mass_(tail_mass) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace spdc
