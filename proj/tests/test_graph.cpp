#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include "gcnlab/graph.hpp"
#include "gcnlab/sbm.hpp"
#include "helpers/dense.hpp"
#include "helpers/fixtures.hpp"

using namespace gcnlab;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = "tmp_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

double edge_weight(const CsrGraph& g, NodeId u, NodeId v) {
    for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e)
        if (g.col_indices[e] == v) return g.edge_weights[e];
    FAIL("edge (" << u << "," << v << ") not found");
    return 0.0;
}

} // namespace

TEST_CASE("load_edge_list builds a symmetric deduplicated graph") {
    SECTION("path graph") {
        auto path = write_temp("path.txt", "0 1\n1 2\n");
        CsrGraph g = load_edge_list(path, 3);
        CHECK(g.num_nodes == 3);
        CHECK(g.degree(0) == 1);
        CHECK(g.degree(1) == 2);
        CHECK(g.degree(2) == 1);
        CHECK(g.has_edge(1, 0));
        CHECK(g.has_edge(2, 1));
        std::remove(path.c_str());
    }
    SECTION("duplicate edges collapse") {
        auto path = write_temp("dup.txt", "0 1\n0 1\n");
        CsrGraph g = load_edge_list(path, 3);
        CHECK(g.num_edges() == 2); // one undirected edge, both directions
        CHECK(g.degree(0) == 1);
        CHECK(g.degree(1) == 1);
        CHECK(g.degree(2) == 0);
        std::remove(path.c_str());
    }
    SECTION("empty file gives isolated nodes") {
        auto path = write_temp("empty.txt", "");
        CsrGraph g = load_edge_list(path, 4);
        CHECK(g.num_nodes == 4);
        CHECK(g.num_edges() == 0);
        std::remove(path.c_str());
    }
    SECTION("malformed line reports its number") {
        auto path = write_temp("bad.txt", "0 1\nnot an edge\n");
        CHECK_THROWS_WITH(load_edge_list(path, 3),
                          Catch::Matchers::ContainsSubstring("line 2"));
        std::remove(path.c_str());
    }
    SECTION("out-of-range index rejected") {
        auto path = write_temp("oob.txt", "0 7\n");
        CHECK_THROWS_AS(load_edge_list(path, 3), ValueError);
        std::remove(path.c_str());
    }
}

TEST_CASE("CsrGraph validation rejects broken structure") {
    CsrGraph g = fixtures::triangle();
    SECTION("row_offsets must start at 0") {
        g.row_offsets[0] = 1;
        CHECK_THROWS_AS(g.validate(), ValueError);
    }
    SECTION("row_offsets must be non-decreasing") {
        g.row_offsets[1] = 5;
        CHECK_THROWS_AS(g.validate(), ValueError);
    }
    SECTION("column indices must be in range") {
        g.col_indices[0] = 9;
        CHECK_THROWS_AS(g.validate(), ValueError);
    }
    SECTION("row columns must be strictly increasing") {
        g.col_indices[1] = g.col_indices[0];
        CHECK_THROWS_AS(g.validate(), ValueError);
    }
    SECTION("edge weights must align with edges") {
        g.edge_weights = {1.0};
        CHECK_THROWS_AS(g.validate(), ValueError);
    }
}

TEST_CASE("symmetric_normalize hand-checked weights") {
    SECTION("triangle: every weight 1/3") {
        auto norm = symmetric_normalize(fixtures::triangle());
        REQUIRE(norm.graph.num_edges() == 9); // 6 edges + 3 self-loops
        for (double w : norm.graph.edge_weights)
            CHECK(w == Catch::Approx(1.0 / 3.0).margin(1e-15));
    }
    SECTION("isolated node: single self-loop of weight 1") {
        auto norm = symmetric_normalize(fixtures::isolated_nodes(1));
        REQUIRE(norm.graph.num_edges() == 1);
        CHECK(norm.graph.edge_weights[0] == 1.0);
    }
    SECTION("two-node path") {
        auto norm = symmetric_normalize(fixtures::path_graph(2));
        CHECK(edge_weight(norm.graph, 0, 0) == Catch::Approx(0.5).margin(1e-15));
        CHECK(edge_weight(norm.graph, 1, 1) == Catch::Approx(0.5).margin(1e-15));
        CHECK(edge_weight(norm.graph, 0, 1) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("asymmetric input rejected") {
        CsrGraph g = build_csr(2, {{0, 1}});
        CHECK_THROWS_AS(symmetric_normalize(g), ValueError);
    }
    SECTION("self-loops rejected") {
        CsrGraph g = build_csr(2, {{0, 0}});
        CHECK_THROWS_AS(symmetric_normalize(g), ValueError);
    }
}

TEST_CASE("symmetric_normalize agrees with the dense oracle on every fixture") {
    for (const auto& g : fixtures::oracle_fixture_set()) {
        auto norm = symmetric_normalize(g);
        auto expect = dense::normalized_adjacency(g);
        auto got = dense::adjacency(norm.graph);
        INFO("fixture with " << g.num_nodes << " nodes");
        CHECK(dense::max_abs_diff(got, expect) <= 1e-12);
    }
}

TEST_CASE("normalization fixes sqrt-degree, row sums hit 1 on regular graphs") {
    auto row_sums = [](const CsrGraph& g) {
        std::vector<double> s(g.num_nodes, 0.0);
        for (NodeId u = 0; u < g.num_nodes; ++u)
            for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e)
                s[u] += g.edge_weights[e];
        return s;
    };
    SECTION("D^{1/2} 1 is a fixed point of the normalized operator") {
        for (const auto& g : fixtures::oracle_fixture_set()) {
            auto norm = symmetric_normalize(g);
            for (NodeId u = 0; u < g.num_nodes; ++u) {
                double acc = 0.0;
                for (std::size_t e = norm.graph.row_offsets[u];
                     e < norm.graph.row_offsets[u + 1]; ++e) {
                    NodeId v = norm.graph.col_indices[e];
                    acc += norm.graph.edge_weights[e] * std::sqrt(1.0 + g.degree(v));
                }
                CHECK(acc == Catch::Approx(std::sqrt(1.0 + g.degree(u))).margin(1e-12));
            }
        }
    }
    SECTION("regular graphs hit exactly 1") {
        for (const auto& g : {fixtures::cycle_graph(8), fixtures::complete_graph(5)}) {
            auto norm = symmetric_normalize(g);
            for (double s : row_sums(norm.graph))
                CHECK(s == Catch::Approx(1.0).margin(1e-12));
        }
    }
}

TEST_CASE("induced_subgraph") {
    SECTION("triangle restricted to two nodes is a single edge") {
        auto sub = induced_subgraph(fixtures::triangle(), {0, 1});
        CHECK(sub.graph.num_nodes == 2);
        CHECK(sub.graph.num_edges() == 2);
        CHECK(sub.graph.has_edge(0, 1));
    }
    SECTION("full node set reproduces the graph") {
        CsrGraph g = fixtures::random_graph(15, 0.3, 5);
        std::vector<NodeId> all(g.num_nodes);
        std::iota(all.begin(), all.end(), 0);
        auto sub = induced_subgraph(g, all);
        CHECK(sub.graph.row_offsets == g.row_offsets);
        CHECK(sub.graph.col_indices == g.col_indices);
        for (NodeId i = 0; i < g.num_nodes; ++i)
            CHECK(sub.new_id_of_old[i] == static_cast<std::int64_t>(i));
    }
    SECTION("4-clique restricted to three nodes is a triangle") {
        auto sub = induced_subgraph(fixtures::complete_graph(4), {0, 1, 2});
        // brute-force edge filter oracle
        std::set<std::pair<NodeId, NodeId>> expect;
        CsrGraph k4 = fixtures::complete_graph(4);
        for (NodeId u : {0, 1, 2})
            for (std::size_t e = k4.row_offsets[u]; e < k4.row_offsets[u + 1]; ++e)
                if (k4.col_indices[e] <= 2)
                    expect.insert({u, k4.col_indices[e]});
        CHECK(expect.size() == sub.graph.num_edges());
        for (auto [u, v] : expect) CHECK(sub.graph.has_edge(u, v));
    }
    SECTION("out-of-range node rejected") {
        CHECK_THROWS_AS(induced_subgraph(fixtures::triangle(), {0, 9}), ValueError);
    }
    SECTION("mapping respects selection order") {
        auto sub = induced_subgraph(fixtures::path_graph(4), {2, 1});
        CHECK(sub.old_id_of_new == std::vector<NodeId>{2, 1});
        CHECK(sub.new_id_of_old[2] == 0);
        CHECK(sub.new_id_of_old[1] == 1);
        CHECK(sub.graph.has_edge(0, 1)); // edge 1-2 survives under relabeling
    }
}

TEST_CASE("generate_sbm") {
    SECTION("extreme probabilities give two disjoint cliques") {
        Dataset d = generate_sbm({2, 2}, 1.0, 0.0, 4, 0.5, 1);
        CHECK(d.graph.has_edge(0, 1));
        CHECK(d.graph.has_edge(2, 3));
        CHECK_FALSE(d.graph.has_edge(0, 2));
        CHECK_FALSE(d.graph.has_edge(1, 3));
        CHECK(d.graph.num_edges() == 4);
    }
    SECTION("same seed reproduces edges, features and splits") {
        Dataset a = generate_sbm({10, 10}, 0.4, 0.1, 4, 0.3, 99);
        Dataset b = generate_sbm({10, 10}, 0.4, 0.1, 4, 0.3, 99);
        CHECK(a.graph.col_indices == b.graph.col_indices);
        CHECK(a.features.data == b.features.data);
        CHECK(a.train_idx == b.train_idx);
    }
    SECTION("expected degrees match the Monte-Carlo oracle") {
        double intra = 0.0, inter = 0.0;
        const int seeds = 10;
        for (int s = 0; s < seeds; ++s) {
            Dataset d = generate_sbm({200, 200}, 0.1, 0.01, 2, 0.5, 100 + s);
            double intra_edges = 0.0, inter_edges = 0.0;
            for (NodeId u = 0; u < d.graph.num_nodes; ++u)
                for (std::size_t e = d.graph.row_offsets[u]; e < d.graph.row_offsets[u + 1]; ++e) {
                    if (d.labels[u] == d.labels[d.graph.col_indices[e]]) intra_edges += 1.0;
                    else inter_edges += 1.0;
                }
            intra += intra_edges / 400.0;
            inter += inter_edges / 400.0;
        }
        intra /= seeds;
        inter /= seeds;
        CHECK(intra == Catch::Approx(199 * 0.1).epsilon(0.15));
        CHECK(inter == Catch::Approx(200 * 0.01).epsilon(0.15));
    }
    SECTION("splits are stratified 60/20/20") {
        Dataset d = generate_sbm({100, 100}, 0.1, 0.01, 4, 0.5, 3);
        CHECK(d.train_idx.size() == 120);
        CHECK(d.valid_idx.size() == 40);
        CHECK(d.test_idx.size() == 40);
        for (std::size_t c = 0; c < 2; ++c) {
            std::size_t cnt = 0;
            for (NodeId i : d.train_idx)
                if (d.labels[i] == static_cast<std::int64_t>(c)) ++cnt;
            CHECK(cnt == 60);
        }
    }
    SECTION("bad arguments rejected") {
        CHECK_THROWS_AS(generate_sbm({}, 0.5, 0.1, 4, 0.5, 1), ValueError);
        CHECK_THROWS_AS(generate_sbm({4, 4}, 1.5, 0.1, 4, 0.5, 1), ValueError);
        CHECK_THROWS_AS(generate_sbm({4, 4}, 0.5, 0.1, 1, 0.5, 1), ValueError);
    }
}

TEST_CASE("aggregate_edge_features") {
    SECTION("single edge with feature [1,2]") {
        std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 0}};
        std::vector<double> feats{1.0, 2.0, 1.0, 2.0};
        CsrGraph g = build_csr(2, edges, nullptr, &feats, 2);
        Tensor x = aggregate_edge_features(g);
        CHECK(x(0, 0) == 1.0);
        CHECK(x(0, 1) == 2.0);
        CHECK(x(1, 0) == 1.0);
        CHECK(x(1, 1) == 2.0);
    }
    SECTION("isolated node gets a zero row") {
        std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 0}};
        std::vector<double> feats{1.0, 1.0};
        CsrGraph g = build_csr(3, edges, nullptr, &feats, 1);
        Tensor x = aggregate_edge_features(g);
        CHECK(x(2, 0) == 0.0);
    }
    SECTION("triangle with unit features sums incident directions") {
        CsrGraph tri = fixtures::triangle();
        std::vector<std::pair<NodeId, NodeId>> edges;
        for (NodeId u = 0; u < 3; ++u)
            for (std::size_t e = tri.row_offsets[u]; e < tri.row_offsets[u + 1]; ++e)
                edges.emplace_back(u, tri.col_indices[e]);
        std::vector<double> feats(edges.size(), 1.0);
        CsrGraph g = build_csr(3, edges, nullptr, &feats, 1);
        Tensor x = aggregate_edge_features(g);
        for (NodeId u = 0; u < 3; ++u) CHECK(x(u, 0) == 2.0);
    }
    SECTION("missing edge features rejected") {
        CHECK_THROWS_AS(aggregate_edge_features(fixtures::triangle()), ValueError);
    }
}
