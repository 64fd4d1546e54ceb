#pragma once

#include <stdexcept>
#include <string>

namespace uvnmt {

// Shape disagreement between tensor operands.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Out-of-range row/token id.
class IndexError : public std::runtime_error {
 public:
  explicit IndexError(const std::string& what) : std::runtime_error(what) {}
};

// A precondition of an operation was violated by the caller.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Sentence too long for the configured maximum; carries the token count.
class LengthError : public std::runtime_error {
 public:
  LengthError(const std::string& what, std::size_t token_count)
      : std::runtime_error(what), token_count_(token_count) {}
  std::size_t token_count() const { return token_count_; }

 private:
  std::size_t token_count_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A parallel corpus file yielded no usable pairs.
class EmptyCorpusError : public std::runtime_error {
 public:
  explicit EmptyCorpusError(const std::string& what) : std::runtime_error(what) {}
};

// Request for a language the model does not know.
class RegistryError : public std::runtime_error {
 public:
  explicit RegistryError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint persistence failures.
class PersistenceError : public std::runtime_error {
 public:
  explicit PersistenceError(const std::string& what) : std::runtime_error(what) {}
};

class CheckpointVersionError : public PersistenceError {
 public:
  explicit CheckpointVersionError(const std::string& what) : PersistenceError(what) {}
};

// Manifest and parameter blob disagree (missing tensor, bad byte range, ...).
class CheckpointConsistencyError : public PersistenceError {
 public:
  explicit CheckpointConsistencyError(const std::string& what) : PersistenceError(what) {}
};

}  // namespace uvnmt
