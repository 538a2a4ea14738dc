#include "las/error.h"

namespace las {

int exit_code_for(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  return 2;  // data, vocab, io, checkpoint, dimension, input
}

}  // namespace las
