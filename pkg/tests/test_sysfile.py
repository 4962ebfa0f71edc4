import pytest

from regsyn import examples, expr, sysfile
from regsyn.model import ControllerModel
from regsyn.sysfile import SysFileError, controller_section, parse_text


MINIMAL = """
[plant]
n = 1
f1 = -x1 + u
g = x1

[reference]
q = w1

[exosystem]
p = 1
s1 = 0
"""


def test_parse_minimal():
    sf = parse_text(MINIMAL)
    assert sf.plant.n == 1
    assert sf.exo.p == 1
    assert sf.controller is None
    assert sf.immersion is None
    assert sf.regulator_solution is None
    assert sf.params is None


def test_builtin_examples_parse():
    for name in examples.names():
        sf = parse_text(examples.get(name).text, origin=name)
        assert sf.plant is not None
        assert sf.exo is not None


def test_comments_and_blank_lines():
    text = "# leading comment\n\n" + MINIMAL + "\n# trailing\n"
    sf = parse_text(text)
    assert expr.to_string(sf.plant.g) == "x1"


def test_unknown_section_rejected():
    with pytest.raises(SysFileError, match=r"unknown section"):
        parse_text(MINIMAL + "\n[bogus]\nk = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(SysFileError, match=r"unknown keys"):
        parse_text(MINIMAL.replace("g = x1", "g = x1\nextra = 2"))


def test_duplicate_section_rejected():
    with pytest.raises(SysFileError, match=r"duplicate section"):
        parse_text(MINIMAL + "\n[plant]\nn = 1\nf1 = 0\ng = x1\n")


def test_duplicate_key_rejected():
    with pytest.raises(SysFileError, match=r"duplicate key"):
        parse_text(MINIMAL.replace("n = 1", "n = 1\nn = 2"))


def test_content_before_section_rejected():
    with pytest.raises(SysFileError, match=r"before any section"):
        parse_text("n = 1\n" + MINIMAL)


def test_missing_equals_rejected():
    with pytest.raises(SysFileError, match=r"key = value"):
        parse_text(MINIMAL.replace("n = 1", "n 1"))


def test_error_messages_carry_location():
    with pytest.raises(SysFileError, match=r"myfile:2"):
        parse_text("[plant]\nnot a key value\n", origin="myfile")


def test_plant_requires_reference_and_exosystem():
    with pytest.raises(SysFileError, match=r"must appear together"):
        parse_text("[plant]\nn = 1\nf1 = 0\ng = x1\n")
    no_exo = MINIMAL.replace("[exosystem]\np = 1\ns1 = 0\n", "")
    with pytest.raises(SysFileError, match=r"requires \[exosystem\]"):
        parse_text(no_exo)


def test_missing_series_entry():
    with pytest.raises(SysFileError, match=r"missing 'f1'"):
        parse_text(MINIMAL.replace("f1 = -x1 + u", "f2 = -x1 + u"))


def test_bad_expression_reported_with_section():
    with pytest.raises(SysFileError, match=r"\[plant\]"):
        parse_text(MINIMAL.replace("f1 = -x1 + u", "f1 = -x1 + ("))


def test_controller_bc_count_mismatch():
    text = MINIMAL + "\n[controller]\nnc = 2\nphi1 = xi2\nphi2 = 0\nlam = xi1\nbc = 1.0\n"
    with pytest.raises(SysFileError, match=r"'bc' has 1 entries, expected 2"):
        parse_text(text)


def test_controller_bc_not_numeric():
    text = MINIMAL + "\n[controller]\nnc = 1\nphi1 = 0\nlam = xi1\nbc = xi1\n"
    with pytest.raises(SysFileError, match=r"comma-separated number list"):
        parse_text(text)


def test_regulator_solution_requires_plant():
    with pytest.raises(SysFileError):
        parse_text("[exosystem]\np = 1\ns1 = 0\n"
                   "[regulator_solution]\npi1 = 0\ngamma = 0\n")


def test_regulator_solution_radius_default_and_override():
    base = MINIMAL + "\n[regulator_solution]\npi1 = w1\ngamma = w1\n"
    assert parse_text(base).regulator_solution.radius == 0.3
    assert parse_text(base + "radius = 0.7\n").regulator_solution.radius == 0.7


def test_params_must_be_numeric():
    with pytest.raises(SysFileError, match=r"values must be numbers"):
        parse_text("[params]\nC = forty\n")
    sf = parse_text("[params]\nC = 4e-5\nL = 0.004\n")
    assert sf.params == {"C": 4e-5, "L": 0.004}


def test_controller_section_round_trip():
    ctrl = ControllerModel.from_strings(
        ["xi2 - xi1^4", "-xi1^3"],
        "(xi1 + xi2 - xi1^4 + sin(xi1)) / (1 + xi1^2)",
        [-0.2, -0.02])
    text = controller_section(ctrl)
    sf = parse_text(text)
    back = sf.controller
    assert back.nc == 2
    assert back.Bc == ctrl.Bc
    assert [expr.to_string(e) for e in back.phi] == [expr.to_string(e) for e in ctrl.phi]
    assert expr.to_string(back.lam) == expr.to_string(ctrl.lam)


def test_write_controller(tmp_path):
    ctrl = ControllerModel.from_strings(["0"], "xi1", [0.125])
    path = tmp_path / "ctrl.sys"
    sysfile.write_controller(ctrl, path)
    sf = sysfile.parse_file(path)
    assert sf.controller.Bc == (0.125,)


def test_example_dump_round_trip():
    # merging the dumped text with an emitted controller parses back whole
    ex = examples.get("example52")
    ctrl = ControllerModel.from_strings(
        ["2*xi1 - 2*xi3", "xi1 - 2*xi3", "2*xi2"], "0.5*xi1 + xi2 + 0.5*xi3",
        [1.0, 2.0, 3.0])
    merged = ex.text + "\n" + controller_section(ctrl)
    sf = parse_text(merged)
    assert sf.controller is not None
    assert sf.immersion is not None
