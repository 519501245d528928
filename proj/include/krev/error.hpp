/*
   Copyright 2026 The krev Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace krev {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Raised while decoding any of the binary wire formats.
class DecodeError : public Error {
  public:
    using Error::Error;
};

class InputTooLong : public Error {
  public:
    using Error::Error;
};

class EmptyChildren : public Error {
  public:
    using Error::Error;
};

class BadBlockLength : public Error {
  public:
    using Error::Error;
};

class DuplicateSerial : public Error {
  public:
    using Error::Error;
};

class UnknownSerial : public Error {
  public:
    using Error::Error;
};

class Infeasible : public Error {
  public:
    using Error::Error;
};

class VersionMismatch : public Error {
  public:
    using Error::Error;
};

class UnknownObu : public Error {
  public:
    using Error::Error;
};

class ConfigInvalid : public Error {
  public:
    using Error::Error;
};

}  // namespace krev
