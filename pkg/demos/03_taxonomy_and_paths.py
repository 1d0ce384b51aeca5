"""Build a small discipline taxonomy, validate label paths, and see how
prediction/truth pairs are categorized (acc / sl / se / other).
"""

from hiergen.taxonomy import LabelPath, Taxonomy, classify_result

tax = Taxonomy.from_specs(
    [
        ("F", 1, None),
        ("G", 1, None),
        ("F02", 2, "F"),
        ("F06", 2, "F"),
        ("F0601", 3, "F06"),
        ("F0602", 3, "F06"),
    ]
)

print("depth:", tax.max_depth)
for level in range(1, tax.max_depth + 1):
    print(f"level {level}:", [n.code for n in tax.level_nodes(level)])

f06 = tax.by_code("F06")
print("children of F06:", [n.code for n in tax.children(f06.id)])

good = tax.path_from_codes(["F", "F06", "F0601"])
bad = LabelPath((tax.by_code("G").id, tax.by_code("F06").id))
print("F > F06 > F0601 valid?", tax.validate_path(good))
print("G > F06 valid?", tax.validate_path(bad))

truth = tax.path_from_codes(["F", "F06", "F0601"])
cases = {
    "same path": tax.path_from_codes(["F", "F06", "F0601"]),
    "stopped early": tax.path_from_codes(["F", "F06"]),
    "wrong branch": tax.path_from_codes(["F", "F02", "F0601"]),
}
for name, pred in cases.items():
    print(f"{name}: {classify_result(pred, truth)}")
print("stopped late:", classify_result(truth, tax.path_from_codes(["F", "F06"])))
