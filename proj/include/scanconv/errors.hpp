#pragma once

#include <stdexcept>
#include <string>

namespace scanconv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SCANCONV_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(#Name ": " + what) {}        \
  }

// scan-grammar
SCANCONV_DEFINE_ERROR(UngrammaticalCommand);
SCANCONV_DEFINE_ERROR(UnknownToken);
SCANCONV_DEFINE_ERROR(MalformedLine);
// split-builder
SCANCONV_DEFINE_ERROR(DegenerateSplit);
SCANCONV_DEFINE_ERROR(UnknownSplit);
// tensor-core
SCANCONV_DEFINE_ERROR(ShapeMismatch);
SCANCONV_DEFINE_ERROR(InvalidRate);
SCANCONV_DEFINE_ERROR(NotScalar);
SCANCONV_DEFINE_ERROR(CheckpointError);
// conv-seq2seq
SCANCONV_DEFINE_ERROR(InvalidConfig);
SCANCONV_DEFINE_ERROR(PositionOverflow);
// trainer
SCANCONV_DEFINE_ERROR(EmptyTrainingSet);
SCANCONV_DEFINE_ERROR(ItemTooLarge);
SCANCONV_DEFINE_ERROR(DivergenceDetected);
// experiment runner
SCANCONV_DEFINE_ERROR(IncompleteResults);
SCANCONV_DEFINE_ERROR(InsufficientResults);
SCANCONV_DEFINE_ERROR(IoError);

#undef SCANCONV_DEFINE_ERROR

}  // namespace scanconv
