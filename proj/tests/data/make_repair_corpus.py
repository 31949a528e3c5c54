#!/usr/bin/env python3
"""Writes repair_corpus.jsonl: broken model output, the expected repaired
text (byte-exact) and the rule ids expected to fire, in ruleset order."""
import json
import pathlib

LDQ, RDQ, LSQ, RSQ = "“", "”", "‘", "’"

CASES = [
    ("single_quoted_key", "{'a': 1}", '{"a": 1}', ["single_quotes"]),
    ("apostrophe_inside_single", "{\"a\": 'it's fine'}", '{"a": "it\'s fine"}', ["single_quotes"]),
    ("unquoted_key", "{a: 1}", '{"a": 1}', ["unquoted_keys"]),
    ("python_literals", '{"a": True, "b": False, "c": None}', '{"a": true, "b": false, "c": null}',
     ["python_literals"]),
    ("trailing_comma_object", '{"a": 1,}', '{"a": 1}', ["trailing_commas"]),
    ("trailing_comma_array", "[1, 2, 3,]", "[1, 2, 3]", ["trailing_commas"]),
    ("missing_comma_object", '{"a": 1 "b": 2}', '{"a": 1, "b": 2}', ["missing_commas"]),
    ("truncated_number", '{"a": 1', '{"a": 1}', ["close_truncated"]),
    ("truncated_string", '{"a": "abc', '{"a": "abc"}', ["close_truncated"]),
    ("truncated_array", '{"a": [1, 2', '{"a": [1, 2]}', ["close_truncated"]),
    ("line_comment", '{"a": 1 // note\n}', '{"a": 1 \n}', ["comments"]),
    ("block_comment", '{"a": /* x */ 1}', '{"a":  1}', ["comments"]),
    ("raw_newline", '{"a": "line1\nline2"}', '{"a": "line1\\nline2"}', ["control_characters"]),
    ("raw_tab", '{"a": "x\ty"}', '{"a": "x\\ty"}', ["control_characters"]),
    ("raw_carriage_return", '{"a": "x\ry"}', '{"a": "x\\ry"}', ["control_characters"]),
    ("smart_double_quotes", f"{{{LDQ}a{RDQ}: {LDQ}b{RDQ}}}", '{"a": "b"}', ["smart_quotes"]),
    ("smart_single_quotes", f"{{{LSQ}a{RSQ}: 1}}", '{"a": 1}', ["smart_quotes", "single_quotes"]),
    ("bareword_value", '{"status": yes}', '{"status": "yes"}', ["bareword_values"]),
    ("doubled_comma", '{"a": 1,, "b": 2}', '{"a": 1, "b": 2}', ["trailing_commas"]),
    ("missing_commas_array", "[1 2 3]", "[1, 2, 3]", ["missing_commas"]),
    ("deep_truncation", '{"a": {"b": [1, {"c": 2', '{"a": {"b": [1, {"c": 2}]}}', ["close_truncated"]),
    ("mismatched_close", '{"a": [1, 2}', '{"a": [1, 2]}', ["close_truncated"]),
    ("combined_single_python_trailing", "{'a': True,}", '{"a": true}',
     ["single_quotes", "python_literals", "trailing_commas"]),
    ("comment_then_trailing_comma", '{"a": 1, // c\n "b": 2,\n}', '{"a": 1, \n "b": 2\n}',
     ["comments", "trailing_commas"]),
    ("exponent_missing_comma", '{"a": -1.5e-3 "b": 2}', '{"a": -1.5e-3, "b": 2}', ["missing_commas"]),
    ("unquoted_key_underscore", "{hallucination_status: true}", '{"hallucination_status": true}',
     ["unquoted_keys"]),
    ("unquoted_key_after_value", '{"a": 1 b: 2}', '{"a": 1, "b": 2}', ["unquoted_keys", "missing_commas"]),
    ("single_with_double_inside", "{'a': 'say \"hi\"'}", '{"a": "say \\"hi\\""}', ["single_quotes"]),
    ("escaped_single", "{'a': 'it\\'s'}", '{"a": "it\'s"}', ["single_quotes"]),
    ("nested_trailing_commas", '{"a": "x", "b": [true, false, null,],}', '{"a": "x", "b": [true, false, null]}',
     ["trailing_commas"]),
    ("bareword_grade", '{"reasoning": "ok", "grade": E4}', '{"reasoning": "ok", "grade": "E4"}',
     ["bareword_values"]),
    ("single_with_newline", "{\"a\": 'multi\nline'}", '{"a": "multi\\nline"}',
     ["single_quotes", "control_characters"]),
    ("truncated_after_newline", '{"a": [1, 2, 3\n', '{"a": [1, 2, 3\n]}', ["close_truncated"]),
    ("missing_comma_after_string", '{"a": 1, "b": "c" "d": 3}', '{"a": 1, "b": "c", "d": 3}', ["missing_commas"]),
    ("missing_comma_between_objects", '[{"a": 1} {"a": 2}]', '[{"a": 1}, {"a": 2}]', ["missing_commas"]),
    ("nested_object_trailing", '{"a": {"b": 1,},}', '{"a": {"b": 1}}', ["trailing_commas"]),
    ("leading_comment", '// output\n{"a": 1}', '\n{"a": 1}', ["comments"]),
    ("comment_in_array", "[1, /* two */ 2]", "[1,  2]", ["comments"]),
    ("python_none_only", '{"a": None}', '{"a": null}', ["python_literals"]),
    ("uppercase_bareword", '{"flag": TRUE}', '{"flag": "TRUE"}', ["bareword_values"]),
    ("all_single_quotes", "{'a': 'x', 'b': 'y'}", '{"a": "x", "b": "y"}', ["single_quotes"]),
    ("single_list_trailing", "{\"list\": ['a', 'b',]}", '{"list": ["a", "b"]}', ["single_quotes", "trailing_commas"]),
    ("truncated_string_newline", '{"a": "abc\n', '{"a": "abc\\n"}', ["control_characters", "close_truncated"]),
    ("truncated_nested_object", '{"a": 1, "b": {"c": "d"', '{"a": 1, "b": {"c": "d"}}', ["close_truncated"]),
    ("truncated_open_array", '{"a": [', '{"a": []}', ["close_truncated"]),
    ("truncated_after_comma", '{"a": 1, "b": 2, ', '{"a": 1, "b": 2 }', ["trailing_commas", "close_truncated"]),
    ("signal_fields_missing_commas", '{"conflict": 1 "support": 0.9 "explicit": 1}',
     '{"conflict": 1, "support": 0.9, "explicit": 1}', ["missing_commas"]),
    ("unicode_escape_trailing", '{"a": "\\u00e9",}', '{"a": "\\u00e9"}', ["trailing_commas"]),
    ("unquoted_keys_single_values", "{hallucination_type: ['diagnosis_error'], evidence_grade: 'E4'}",
     '{"hallucination_type": ["diagnosis_error"], "evidence_grade": "E4"}', ["single_quotes", "unquoted_keys"]),
    ("apostrophe_dont", "{\"a\": 'don't'}", '{"a": "don\'t"}', ["single_quotes"]),
    ("trailing_line_comment", '{"a": "x" // trailing\n}', '{"a": "x" \n}', ["comments"]),
    ("python_list", "[True, False, None]", "[true, false, null]", ["python_literals"]),
    ("hyphenated_bareword", '{"a": follow-up}', '{"a": "follow-up"}', ["bareword_values"]),
    ("trailing_comma_newline", '{"a": 1,\n}', '{"a": 1\n}', ["trailing_commas"]),
    ("valid_compact", '{"a": 1}', '{"a": 1}', []),
    ("valid_pretty", '{\n  "a": [1, 2]\n}', '{\n  "a": [1, 2]\n}', []),
    ("valid_smart_quotes_in_string", f'{{"a": "he said {LDQ}x{RDQ}"}}', f'{{"a": "he said {LDQ}x{RDQ}"}}', []),
    ("valid_escape", '{"a": "tab\\there"}', '{"a": "tab\\there"}', []),
    ("valid_trailing_newline", '{"a": 1}\n', '{"a": 1}\n', []),
    ("detection_output_mixed",
     "{'reasoning': 'Sentence says tuberculosis; context lists pneumonia [ent:abc123]', "
     "hallucination_status: True, 'hallucination_type': ['diagnosis_error'], conflict: 1, support: 0.1, "
     "explicit: 1, evidence_grade: E4,}",
     '{"reasoning": "Sentence says tuberculosis; context lists pneumonia [ent:abc123]", '
     '"hallucination_status": true, "hallucination_type": ["diagnosis_error"], "conflict": 1, "support": 0.1, '
     '"explicit": 1, "evidence_grade": "E4"}',
     ["single_quotes", "unquoted_keys", "python_literals", "bareword_values", "trailing_commas"]),
]

names = [c[0] for c in CASES]
assert len(names) == len(set(names))
out = pathlib.Path(__file__).with_name("repair_corpus.jsonl")
with out.open("w", encoding="utf-8") as f:
    for name, broken, expected, rules in CASES:
        f.write(json.dumps({"name": name, "broken": broken, "expected": expected, "rules": rules},
                           ensure_ascii=False) + "\n")
print(f"wrote {len(CASES)} cases to {out}")
