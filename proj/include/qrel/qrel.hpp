//
// Copyright 2026 The qrel Authors
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
//

#pragma once

#include "qrel/adversarial.hpp"
#include "qrel/analysis.hpp"
#include "qrel/baselines.hpp"
#include "qrel/dataset.hpp"
#include "qrel/error.hpp"
#include "qrel/model.hpp"
#include "qrel/output.hpp"
#include "qrel/parallel.hpp"
#include "qrel/relevance.hpp"
#include "qrel/rng.hpp"
#include "qrel/stats.hpp"
#include "qrel/tokenizer.hpp"
#include "qrel/transport.hpp"
#include "qrel/variants.hpp"
