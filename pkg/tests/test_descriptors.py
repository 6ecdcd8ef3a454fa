import pytest

from aisprop.descriptors import mol_weight
from aisprop.errors import UnknownElement
from aisprop.molgraph import parse_smiles


class TestMolWeight:
    @pytest.mark.parametrize("smiles,expected", [
        ("C", 12.011 + 4 * 1.008),
        ("O", 15.999 + 2 * 1.008),
        ("c1ccccc1", 6 * 12.011 + 6 * 1.008),
        ("[NH4+]", 14.007 + 4 * 1.008),
        ("CCO", 2 * 12.011 + 15.999 + 6 * 1.008),
        ("[13CH4]", 13 + 4 * 1.008),
        ("ClCCl", 2 * 35.45 + 12.011 + 2 * 1.008),
    ])
    def test_hand_computed(self, smiles, expected):
        assert mol_weight(smiles) == pytest.approx(expected, abs=1e-9)

    def test_accepts_molecule(self):
        assert mol_weight(parse_smiles("CC")) == mol_weight("CC")

    def test_explicit_hydrogen_atoms_count_once(self):
        assert mol_weight("[H]C([H])([H])[H]") == pytest.approx(mol_weight("C"))

    def test_element_without_standard_weight(self):
        with pytest.raises(UnknownElement):
            mol_weight("[Tc]")

    def test_additive_over_components(self):
        assert mol_weight("CC.O") == pytest.approx(mol_weight("CC") + mol_weight("O"))
