// Copyright 2026 The Countnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "countnet/arch.hpp"
#include "countnet/core_types.hpp"
#include "countnet/equivalence.hpp"
#include "countnet/event_runtime.hpp"
#include "countnet/events.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/metrics.hpp"
#include "countnet/mnist.hpp"
#include "countnet/model_io.hpp"
#include "countnet/synapse_table.hpp"
#include "countnet/trainer.hpp"
