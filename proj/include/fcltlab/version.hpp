// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#define FCLTLAB_VERSION_MAJOR 0
#define FCLTLAB_VERSION_MINOR 1
#define FCLTLAB_VERSION_PATCH 0
#define FCLTLAB_VERSION_STRING "0.1.0"
