//! Canonical relative paths used as keys throughout the namespace.
//!
//! A canonical path has no leading or trailing `/`, no empty or `.`
//! components and no `..`. The dataset root is the empty string.

use crate::error::{Error, Result};

pub fn normalize(path: &str) -> Result<String> {
    let mut parts: Vec<&str> = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                return Err(Error::InvalidArgument(format!(
                    "parent components are not supported: {path}"
                )))
            }
            c => {
                if c.contains('\0') {
                    return Err(Error::InvalidArgument(format!("NUL byte in path: {path:?}")));
                }
                parts.push(c)
            }
        }
    }
    Ok(parts.join("/"))
}

/// Parent directory of a canonical path. The root has no parent.
pub fn parent(path: &str) -> Option<&str> {
    if path.is_empty() {
        return None;
    }
    Some(path.rfind('/').map_or("", |i| &path[..i]))
}

pub fn file_name(path: &str) -> &str {
    path.rfind('/').map_or(path, |i| &path[i + 1..])
}

/// True when `path` is `dir` itself or lies somewhere below it.
pub fn is_within(path: &str, dir: &str) -> bool {
    dir.is_empty()
        || path == dir
        || (path.len() > dir.len() && path.starts_with(dir) && path.as_bytes()[dir.len()] == b'/')
}

/// All ancestors of `path`, root first, excluding `path` itself.
pub fn ancestors(path: &str) -> impl Iterator<Item = &str> {
    let mut cuts: Vec<&str> = vec![""];
    for (i, b) in path.bytes().enumerate() {
        if b == b'/' {
            cuts.push(&path[..i]);
        }
    }
    if path.is_empty() {
        cuts.clear();
    }
    cuts.into_iter()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_noise() {
        assert_eq!(normalize("/a//b/./c/").unwrap(), "a/b/c");
        assert_eq!(normalize("").unwrap(), "");
        assert_eq!(normalize("/").unwrap(), "");
        assert!(normalize("a/../b").is_err());
    }

    #[test]
    fn parents_and_names() {
        assert_eq!(parent("a/b/c"), Some("a/b"));
        assert_eq!(parent("a"), Some(""));
        assert_eq!(parent(""), None);
        assert_eq!(file_name("a/b/c"), "c");
        assert_eq!(file_name("c"), "c");
        assert_eq!(ancestors("a/b/c").collect::<Vec<_>>(), vec!["", "a", "a/b"]);
        assert_eq!(ancestors("a").collect::<Vec<_>>(), vec![""]);
        assert_eq!(ancestors("").count(), 0);
    }

    #[test]
    fn within() {
        assert!(is_within("val/x", "val"));
        assert!(is_within("val", "val"));
        assert!(!is_within("valley/x", "val"));
        assert!(is_within("anything", ""));
    }
}
