#include "tempoproj/error.hpp"

namespace tempoproj {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::EmptyDataset: return "empty dataset";
    case ErrorKind::Label: return "label error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::DegenerateInput: return "degenerate input";
    case ErrorKind::UnsupportedInput: return "unsupported input";
    case ErrorKind::Numerical: return "numerical error";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

}  // namespace tempoproj
