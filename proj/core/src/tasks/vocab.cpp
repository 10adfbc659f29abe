#include "patchlab/tasks/vocab.hpp"

#include <string>

#include "patchlab/error.hpp"

namespace patchlab {

int Vocab::digit(int value) const {
  require(value >= 0 && value < modulus, ErrorCode::kInvalidArgument, "digit outside modulus");
  return value;
}

int Vocab::payload(int index) const {
  require(index >= 0 && index < payload_size, ErrorCode::kInvalidArgument, "payload index out of range");
  return modulus + index;
}

void Vocab::validate(int vocab_size) const {
  require(modulus >= 2 && payload_size >= 2, ErrorCode::kInvalidArgument, "vocab needs modulus and payload >= 2");
  require(size() <= vocab_size, ErrorCode::kInvalidArgument,
          "task vocabulary needs " + std::to_string(size()) + " ids but the model has " +
              std::to_string(vocab_size));
}

}  // namespace patchlab
