/* Copyright 2026 The mp3s-eval Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Headless evaluation: representations scored without a trained decoder.

#ifndef MP3S_HEADLESS_HPP_
#define MP3S_HEADLESS_HPP_

#include "mp3s/headless/abx.hpp"
#include "mp3s/headless/similarity.hpp"
#include "mp3s/headless/verification.hpp"

#endif  // MP3S_HEADLESS_HPP_
