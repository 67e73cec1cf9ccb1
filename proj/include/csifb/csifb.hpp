// SPDX-License-Identifier: Apache-2.0
//
// csifb: compressed CSI feedback simulation for correlated massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CSIFB_CSIFB_HPP
#define CSIFB_CSIFB_HPP

#include "bases.hpp"
#include "channel_model.hpp"
#include "common.hpp"
#include "compression.hpp"
#include "config.hpp"
#include "harness.hpp"
#include "precoding.hpp"
#include "quantization.hpp"
#include "reconstruction.hpp"

#endif
