#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/rng.hpp"
#include "support.hpp"

using namespace minerva;

TEST(Csv, RoundTripIsExact) {
    const Dataset d = testing_support::random_dataset({3, 5, 2}, 4, 200, 0, 11);
    const std::string text = to_csv(d);
    const Dataset back = from_csv(text, categorical_cardinalities(d));
    EXPECT_EQ(to_csv(back), text);
    EXPECT_EQ(dataset_hash(back), dataset_hash(d));
    for (std::size_t j = 4; j < 7; ++j) {
        EXPECT_EQ(back.features[j].values, d.features[j].values) << "float column " << j;
    }
}

TEST(Csv, CodesAreOneBasedOnDisk) {
    const Dataset d = from_csv("a:cat,b:float,y:target_cat\n1,0.5,2\n3,-1,1\n");
    EXPECT_EQ(d.features[0].codes, (std::vector<std::int32_t>{0, 2}));
    EXPECT_EQ(d.features[0].cardinality, 3u);
    EXPECT_EQ(d.target.codes, (std::vector<std::int32_t>{1, 0}));
    EXPECT_EQ(d.features[1].values, (std::vector<double>{0.5, -1.0}));
}

TEST(Csv, TargetMayAppearAnywhere) {
    const Dataset d = from_csv("y:target_float,a:cat,b:cat\n0.5,1,2\n1.5,2,4\n", {7, 9});
    ASSERT_EQ(d.feature_count(), 2u);
    EXPECT_EQ(d.features[0].name, "a");
    EXPECT_EQ(d.features[0].cardinality, 7u);
    EXPECT_EQ(d.features[1].cardinality, 9u);
    EXPECT_EQ(d.target.values, (std::vector<double>{0.5, 1.5}));
}

TEST(Csv, SchemaErrors) {
    EXPECT_THROW(from_csv(""), SchemaError);
    EXPECT_THROW(from_csv("a:cat,b:float\n1,2\n"), SchemaError);
    EXPECT_THROW(from_csv("a:cat,y:target_cat,z:target_float\n1,1,1\n"), SchemaError);
    EXPECT_THROW(from_csv("a:weird,y:target_float\n1,1\n"), SchemaError);
    EXPECT_THROW(from_csv("a,y:target_float\n1,1\n"), SchemaError);
}

TEST(Csv, MissingTargetIsASchemaErrorAndADataError) {
    // Callers that only distinguish data problems still catch it.
    EXPECT_THROW(from_csv("a:cat\n1\n"), DataError);
}

TEST(Csv, CellErrorsNameRowAndColumn) {
    try {
        from_csv("a:cat,b:float,y:target_float\n1,2,3\n1,oops,3\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
    }
    EXPECT_THROW(from_csv("a:cat,y:target_float\n0,1\n"), DataError);
    EXPECT_THROW(from_csv("a:cat,y:target_float\n1,2,3\n"), DataError);
    EXPECT_THROW(from_csv("a:float,y:target_float\nnan,1\n"), DataError);
    EXPECT_THROW(from_csv("a:cat,y:target_float\n5,1\n", {3}), DataError);
}

TEST(Csv, MixedWideIngestion) {
    // 60 columns, alternating categorical and float, with a categorical target.
    Philox rng(3, 0);
    std::string text;
    std::vector<std::size_t> cards;
    for (int c = 0; c < 60; ++c) {
        text += "x" + std::to_string(c) + (c % 2 == 0 ? ":cat," : ":float,");
        if (c % 2 == 0) {
            cards.push_back(2 + static_cast<std::size_t>(c % 7));
        }
    }
    text += "label:target_cat\n";
    const std::size_t rows = 300;
    for (std::size_t r = 0; r < rows; ++r) {
        for (int c = 0; c < 60; ++c) {
            if (c % 2 == 0) {
                text += std::to_string(1 + rng.index(cards[static_cast<std::size_t>(c / 2)])) + ",";
            } else {
                text += std::to_string(rng.normal()) + ",";
            }
        }
        text += std::to_string(1 + rng.index(2)) + "\n";
    }
    const Dataset d = from_csv(text);
    EXPECT_EQ(d.feature_count(), 60u);
    EXPECT_EQ(d.rows(), rows);
    EXPECT_TRUE(d.target.is_categorical());
    std::size_t n_cat = 0;
    for (const auto& c : d.features) {
        n_cat += c.is_categorical();
    }
    EXPECT_EQ(n_cat, 30u);
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(from_csv(to_csv(d), categorical_cardinalities(d)).features.size(), 60u);
}

TEST(Csv, BlankLinesAndWhitespaceAreTolerated) {
    const Dataset d = from_csv("a:cat , y:target_float\n\n 1 , 2.5 \n\n2,3\n");
    EXPECT_EQ(d.rows(), 2u);
    EXPECT_EQ(d.target.values, (std::vector<double>{2.5, 3.0}));
}

TEST(Dataset, ValidateCatchesRaggedColumns) {
    Dataset d = testing_support::random_dataset({3}, 1, 10, 0, 1);
    d.features[1].values.pop_back();
    EXPECT_THROW(d.validate(), DataError);
}

TEST(Dataset, SubsetsKeepAlignment) {
    const Dataset d = testing_support::random_dataset({3, 4}, 2, 50, 2, 5);
    const Dataset rows = d.subset_rows({4, 2, 4});
    EXPECT_EQ(rows.rows(), 3u);
    EXPECT_EQ(rows.features[1].codes[0], d.features[1].codes[4]);
    EXPECT_EQ(rows.features[1].codes[1], d.features[1].codes[2]);
    EXPECT_EQ(rows.target.codes[2], d.target.codes[4]);
    const Dataset cols = d.subset_features({3, 0});
    EXPECT_EQ(cols.features[0].name, d.features[3].name);
    EXPECT_EQ(cols.features[1].name, d.features[0].name);
}

TEST(Hash, Fnv1aKnownValues) {
    // Reference values of 64-bit FNV-1a.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Hash, DependsOnContent) {
    Dataset d = testing_support::random_dataset({3}, 1, 10, 0, 1);
    const std::string h = dataset_hash(d);
    d.features[1].values[0] += 1e-9;
    EXPECT_NE(dataset_hash(d), h);
}

TEST(Files, ReadingAMissingFileIsAnIoError) {
    EXPECT_THROW(read_text_file("/nonexistent/dir/file.csv"), IoError);
    EXPECT_THROW(write_text_file("/nonexistent/dir/file.csv", "x"), IoError);
}
