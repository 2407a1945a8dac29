/* Copyright 2026 The MDPR Authors. All Rights Reserved.

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

#pragma once

#include "mdpr/ablation.hpp"
#include "mdpr/bundle.hpp"
#include "mdpr/data.hpp"
#include "mdpr/encoders.hpp"
#include "mdpr/error.hpp"
#include "mdpr/evaluation.hpp"
#include "mdpr/knowledge_base.hpp"
#include "mdpr/losses.hpp"
#include "mdpr/model.hpp"
#include "mdpr/numerics.hpp"
#include "mdpr/prompts.hpp"
#include "mdpr/rng.hpp"
#include "mdpr/routing.hpp"
#include "mdpr/tensor.hpp"
#include "mdpr/training.hpp"
#include "mdpr/world.hpp"
