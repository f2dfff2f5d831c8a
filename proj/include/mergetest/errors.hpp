#pragma once

#include <stdexcept>
#include <string>

namespace mergetest {

// Non-finite state produced during a rollout; almost always a buggy policy.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a policy's input contract (e.g. missing SVO angle).
class InterfaceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sampler steps invoked out of order (e.g. adaptive batch without a model).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Kernel matrix could not be factorized even after jitter escalation.
class IllConditionedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (CSV, JSON config, policy files).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mergetest
