//! Versioned CSV output.

pub const SCHEMA_LINE: &str = "# schema=1";

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Schema comment, header row, then one line per row. Cells never
    /// contain commas, so no quoting is needed.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            debug_assert_eq!(row.len(), self.header.len());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
