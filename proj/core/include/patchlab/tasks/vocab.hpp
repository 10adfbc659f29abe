#pragma once

namespace patchlab {

// Token layout: digits [0, m), payload tokens [m, m + P), then the
// structure tokens. The NEUTRAL control is the receiver's ctrl token.
struct Vocab {
  int modulus = 10;
  int payload_size = 16;

  int digit(int value) const;
  int payload(int index) const;
  bool is_digit(int token) const { return token >= 0 && token < modulus; }
  bool is_payload(int token) const { return token >= modulus && token < modulus + payload_size; }

  int ctrl_add() const { return modulus + payload_size; }
  int ctrl_sub() const { return ctrl_add() + 1; }
  int ctrl_copy() const { return ctrl_add() + 2; }
  int ctrl_neutral() const { return ctrl_add() + 3; }
  int ctrl_seq() const { return ctrl_add() + 4; }
  int op() const { return ctrl_add() + 5; }
  int eq() const { return ctrl_add() + 6; }

  int size() const { return ctrl_add() + 7; }

  // Throws unless modulus >= 2, payload_size >= 2 and size() <= vocab_size.
  void validate(int vocab_size) const;
};

}  // namespace patchlab
