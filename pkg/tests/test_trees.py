import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgswitch.trees import (ParseError, ParseTree, edge_distance, parse_tree, read_parse_file, read_parses,
                            root_distance, structural_features)

EXAMPLE = "(S (NP (DT the) (NN dog)) (VP (VBD ran)))"


def tree_graph(tree):
    """Undirected graph over constituents and word leaves; returns (graph, root, leaf nodes)."""
    g = nx.Graph()
    leaves = []
    counter = iter(range(10 ** 6))

    def walk(node):
        me = next(counter)
        g.add_node(me)
        for ch in node.children:
            if isinstance(ch, str):
                leaf = ("leaf", next(counter))
                g.add_edge(me, leaf)
                leaves.append(leaf)
            else:
                g.add_edge(me, walk(ch))
        return me

    root = walk(tree)
    return g, root, leaves


@st.composite
def trees(draw, depth=0):
    if depth >= 3 or draw(st.booleans()):
        return ParseTree(draw(st.sampled_from(["NN", "DT", "VB", "."])), [draw(st.sampled_from(["a", "b", "c"]))])
    kids = draw(st.lists(trees(depth=depth + 1), min_size=1, max_size=3))
    return ParseTree(draw(st.sampled_from(["S", "NP", "VP"])), kids)


class TestReading:
    def test_example(self):
        t = parse_tree(EXAMPLE)
        assert t.leaves() == ["the", "dog", "ran"]
        assert t.pos() == ["DT", "NN", "VBD"]

    def test_single_preterminal(self):
        t = parse_tree("(NN dog)")
        assert t.leaves() == ["dog"] and t.pos() == ["NN"]

    def test_truncated_reports_offset(self):
        with pytest.raises(ParseError) as e:
            parse_tree("(S (NP")
        assert e.value.offset == 6

    @pytest.mark.parametrize("bad", ["", "(S (NN a)))", "(S (NN a b))", "(S )", "(a)", "NN"])
    def test_malformed(self, bad):
        with pytest.raises(ParseError):
            parse_tree(bad)

    def test_read_parses_lines(self):
        ts = read_parses(EXAMPLE + "\n\n(NN dog)\n")
        assert len(ts) == 2
        with pytest.raises(ParseError, match="line 2"):
            read_parses("(NN a)\n(NN\n")

    def test_empty_root_label(self):
        t = parse_tree("( (S (NN a)))")
        assert t.label == "" and parse_tree(t.to_bracketed()) == t

    @given(trees())
    @settings(max_examples=100)
    def test_round_trip(self, t):
        assert parse_tree(t.to_bracketed()) == t

    def test_parse_file(self, tmp_path):
        p = tmp_path / "p.txt"
        p.write_text(f"d1\t{EXAMPLE}\nd1\t(NN x)\nd2\t(NN y)\n")
        out = read_parse_file(p)
        assert [len(out["d1"]), len(out["d2"])] == [2, 1]
        p.write_text("d1\t(NN x\n")
        with pytest.raises(ParseError, match="line 1"):
            read_parse_file(p)


class TestDistances:
    def test_root_examples(self):
        assert root_distance(parse_tree(EXAMPLE), 0) == 3
        assert root_distance(parse_tree("(NN dog)"), 0) == 1
        assert root_distance(parse_tree("(S (NP (NP (DT the) (NN dog))))"), 0) == 4
        with pytest.raises(IndexError):
            root_distance(parse_tree(EXAMPLE), 3)

    def test_edge_examples(self):
        t = parse_tree(EXAMPLE)
        assert edge_distance(t, 0) is None
        assert edge_distance(t, 1) == 4
        assert edge_distance(t, 2) == 6
        two = [t, parse_tree("(S (NN x) (NN y))")]
        assert edge_distance(two, 3) is None
        assert edge_distance(two, 4) == 4
        with pytest.raises(IndexError):
            edge_distance(two, 5)

    @given(trees())
    @settings(max_examples=150)
    def test_shortest_path_oracle(self, t):
        g, root, leaves = tree_graph(t)
        sf = structural_features([t])
        for i, leaf in enumerate(leaves):
            assert sf.d_root[i] == nx.shortest_path_length(g, root, leaf) == root_distance(t, i)
            if i:
                assert sf.d_edge[i] == nx.shortest_path_length(g, leaves[i - 1], leaf) == edge_distance(t, i)
                assert sf.d_edge[i] <= sf.d_root[i - 1] + sf.d_root[i]
