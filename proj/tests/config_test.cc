// Copyright 2026 The Tustin-Net Authors
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

#include "tustin/config.h"

#include <gtest/gtest.h>

#include "tustin/errors.h"

namespace tustin {
namespace {

TEST(ConfigTest, ParsesKeysValuesAndComments) {
  const auto c = KeyValueConfig::Parse(
      "# comment\n"
      "a = 1.5\n"
      "  b=  hello world  # trailing\n"
      "\n"
      "v = 1, 2 3\n"
      "flag = true\n"
      "n = -4\n");
  EXPECT_DOUBLE_EQ(c.GetDouble("a"), 1.5);
  EXPECT_EQ(c.GetString("b"), "hello world");
  EXPECT_EQ(c.GetVector("v"), (std::vector<double>{1, 2, 3}));
  EXPECT_TRUE(c.GetBool("flag"));
  EXPECT_EQ(c.GetInt("n"), -4);
  EXPECT_FALSE(c.Has("missing"));
  EXPECT_EQ(c.GetDouble("missing", 7.0), 7.0);
}

TEST(ConfigTest, MalformedValuesThrow) {
  const auto c = KeyValueConfig::Parse("x = abc\nn = 1.5\nu = -1\n");
  EXPECT_THROW(c.GetDouble("x"), ConfigError);
  EXPECT_THROW(c.GetInt("n"), ConfigError);
  EXPECT_THROW(c.GetUint("u"), ConfigError);
  EXPECT_THROW(c.GetBool("x"), ConfigError);
  EXPECT_THROW(c.GetDouble("missing"), ConfigError);
  EXPECT_THROW(KeyValueConfig::Parse("no equals sign\n"), ConfigError);
}

TEST(ConfigTest, ToTextIsSortedAndReparses) {
  auto c = KeyValueConfig::Parse("z = 1\na = 2\n");
  c.Set("m", "3");
  const std::string text = c.ToText();
  EXPECT_EQ(text, "a = 2\nm = 3\nz = 1\n");
  EXPECT_EQ(KeyValueConfig::Parse(text).ToText(), text);
}

TEST(ConfigTest, Fnv1aReferenceValues) {
  EXPECT_EQ(Fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(Fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

}  // namespace
}  // namespace tustin
