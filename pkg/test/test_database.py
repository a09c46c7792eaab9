"""Test the per-run result store"""
import unittest
from magcal.core.database import Database


class DBTest(unittest.TestCase):
    """Database test"""

    def test_update(self):
        database = Database()
        database.update("ekf", {"result": 42})
        self.assertDictEqual(database.get("ekf"), {"result": 42})
        database.update("ekf", {"result": 33, "passes": [1]})
        self.assertDictEqual(database.get("ekf"), {"result": 33, "passes": [1]})
        database.update("batch-thm21", {"window": 20})
        self.assertDictEqual(database.get("batch-thm21"), {"window": 20})
        self.assertDictEqual(database.get("ekf"), {"result": 33, "passes": [1]})

    def test_missing(self):
        database = Database()
        database.update("ekf", {"result": 42})
        self.assertIsNone(database.get("batch-thm22"))
        self.assertEqual(database.get("batch-thm22", {}), {})
        self.assertEqual(database.get_item("ekf", "result"), 42)
        self.assertIsNone(database.get_item("ekf", "window"))
        self.assertIsNone(database.get_item("batch-thm22", "result"))


if __name__ == "__main__":
    unittest.main()
