#pragma once

#include <stdexcept>
#include <string>

namespace qcaa {

// Every library failure carries a stable one-token reason code so the CLI can
// report it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define QCAA_DEFINE_ERROR(Name, token)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(token, message) {} \
  };

QCAA_DEFINE_ERROR(DimensionError, "dimension_error")
QCAA_DEFINE_ERROR(ParameterError, "parameter_error")
QCAA_DEFINE_ERROR(ContractError, "contract_error")
QCAA_DEFINE_ERROR(IndexError, "index_error")
QCAA_DEFINE_ERROR(DataError, "data_error")
QCAA_DEFINE_ERROR(ConfigError, "config_error")
QCAA_DEFINE_ERROR(CheckpointError, "checkpoint_error")
QCAA_DEFINE_ERROR(TrainingError, "training_error")

#undef QCAA_DEFINE_ERROR

}  // namespace qcaa
