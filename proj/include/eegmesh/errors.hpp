// Copyright 2026 The EegMesh Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace eegmesh {

// Error categories drive the CLI exit codes: usage 1, data 2, compute 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ComputeError : public Error {
 public:
  using Error::Error;
};

#define EEGMESH_ERROR(NAME, BASE)   \
  class NAME : public BASE {        \
   public:                          \
    using BASE::BASE;               \
  }

// edf_ingest
EEGMESH_ERROR(MalformedHeader, DataError);
EEGMESH_ERROR(TruncatedData, DataError);
EEGMESH_ERROR(UnsupportedLayout, DataError);
EEGMESH_ERROR(InvalidRun, UsageError);
EEGMESH_ERROR(UnknownSubject, UsageError);

// preprocess
EEGMESH_ERROR(SignalTooShort, DataError);
EEGMESH_ERROR(InvalidCutoff, UsageError);
EEGMESH_ERROR(WindowTooLarge, UsageError);
EEGMESH_ERROR(InvalidPhaseCount, UsageError);
EEGMESH_ERROR(LayoutMismatch, DataError);
EEGMESH_ERROR(UnknownElectrode, UsageError);

// nn_core
EEGMESH_ERROR(ShapeMismatch, ComputeError);
EEGMESH_ERROR(BatchTooSmall, ComputeError);
EEGMESH_ERROR(InvalidRate, UsageError);
EEGMESH_ERROR(LabelOutOfRange, ComputeError);
EEGMESH_ERROR(BadCheckpoint, DataError);

// training
EEGMESH_ERROR(TooFewExamples, DataError);
EEGMESH_ERROR(SubjectMissingFromTrain, DataError);
EEGMESH_ERROR(DivergenceDetected, ComputeError);
EEGMESH_ERROR(EmptyTestSet, DataError);
EEGMESH_ERROR(InsufficientData, DataError);

// biometrics
EEGMESH_ERROR(WrongModelKind, UsageError);
EEGMESH_ERROR(DimensionMismatch, ComputeError);
EEGMESH_ERROR(DegeneratePairs, DataError);
EEGMESH_ERROR(ScenarioDataMissing, DataError);

// cli
EEGMESH_ERROR(MissingDataset, DataError);
EEGMESH_ERROR(InvalidManifest, UsageError);
EEGMESH_ERROR(MissingCheckpoint, DataError);
EEGMESH_ERROR(NoResults, DataError);
EEGMESH_ERROR(OutputLocked, UsageError);

#undef EEGMESH_ERROR

}  // namespace eegmesh
