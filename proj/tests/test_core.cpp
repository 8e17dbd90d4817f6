/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedstream/core.hpp"
#include "fedstream/error.hpp"

#include <array>
#include <string>

using namespace fedstream;

TEST_CASE("fnv1a64 matches the published reference vectors") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("b") == 0xaf63df4c8601f1a5ULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("fnv1a64 chains across calls like one concatenated input") {
    CHECK(fnv1a64("bar", fnv1a64("foo")) == fnv1a64("foobar"));
    CHECK(fnv1a64("", fnv1a64("a")) == fnv1a64("a"));
}

TEST_CASE("keyed partition selection is hash mod partition count") {
    // 14695981039346656037 % 4 == 1, 0xaf63dc4c8601ec8c % 4 == 0.
    CHECK(partition_for_key("", 4) == 1);
    CHECK(partition_for_key("a", 4) == 0);
    CHECK(partition_for_key("a", 1) == 0);
    for (std::uint32_t n : {1u, 2u, 3u, 7u, 16u}) {
        CHECK(partition_for_key("rider-42", n) == fnv1a64("rider-42") % n);
    }
}

TEST_CASE("zero partitions is rejected") {
    CHECK_THROWS_AS(partition_for_key("a", 0), SimError);
    try {
        partition_for_key("a", 0);
    } catch (const SimError& error) {
        CHECK(error.code() == Errc::InvalidPartitionCount);
    }
}

TEST_CASE("keyed selection spreads sequential keys over all partitions") {
    std::array<int, 8> buckets{};
    for (int i = 0; i < 1000; ++i) {
        ++buckets[partition_for_key("key-" + std::to_string(i), 8)];
    }
    for (int count : buckets) {
        CHECK(count > 0);
    }
}

TEST_CASE("message ids order by (hi, lo)") {
    MessageId a{0, 5};
    MessageId b{0, 6};
    MessageId c{1, 0};
    CHECK(a < b);
    CHECK(b < c);
    CHECK(a == MessageId{0, 5});
    CHECK(to_string(MessageId{0, 7}) == "7");
}

TEST_CASE("topic partitions order by (topic, partition)") {
    TopicPartition a{"alpha", 1};
    TopicPartition b{"alpha", 2};
    TopicPartition c{"beta", 0};
    CHECK(a < b);
    CHECK(b < c);
}
