//! Typed text, the undo stack and what the simulated user wants next.

use crate::predictor::Suggestion;
use crate::symbol::SymbolId;

/// Text committed so far against a fixed target.
#[derive(Clone, Debug)]
pub(crate) struct Session<'t> {
    target: &'t str,
    typed: String,
    /// Length of `typed` before each commit, so backspace removes a whole
    /// selection.
    marks: Vec<usize>,
}

impl<'t> Session<'t> {
    pub(crate) fn new(target: &'t str) -> Self {
        Session {
            target,
            typed: String::new(),
            marks: Vec::new(),
        }
    }

    pub(crate) fn typed(&self) -> &str {
        &self.typed
    }

    pub(crate) fn into_typed(self) -> String {
        self.typed
    }

    pub(crate) fn on_track(&self) -> bool {
        self.target.starts_with(&self.typed)
    }

    pub(crate) fn done(&self) -> bool {
        self.typed == self.target
    }

    /// Context before the word being typed and the partial word itself.
    pub(crate) fn split(&self) -> (&str, &str) {
        let start = self.typed.rfind(' ').map_or(0, |i| i + 1);
        (&self.typed[..start], &self.typed[start..])
    }

    /// Target word under the cursor while on track.
    fn target_word(&self) -> &'t str {
        let start = self.split().0.len();
        let rest = &self.target[start..];
        &rest[..rest.find(' ').unwrap_or(rest.len())]
    }

    /// The cell the user attends to: backspace when off track, the slot
    /// holding the current target word if offered, else the next character.
    pub(crate) fn intended(&self, suggestions: &[Suggestion]) -> SymbolId {
        if !self.on_track() {
            return SymbolId::BACKSPACE;
        }
        let word = self.target_word();
        if word.len() > self.split().1.len() {
            if let Some(i) = suggestions.iter().position(|s| s.word == word) {
                return SymbolId::slot(i).expect("at most eight suggestions");
            }
        }
        let next = self.target.as_bytes()[self.typed.len()] as char;
        SymbolId::from_char(next).expect("normalized target")
    }

    /// Text a word slot commits: the untyped suffix plus a word space,
    /// except where the text would then match the whole target.
    fn word_commit(&self, word: &str) -> String {
        let suffix = &word[self.split().1.len()..];
        let complete = self.target.strip_prefix(self.typed.as_str()) == Some(suffix);
        if complete {
            suffix.to_owned()
        } else {
            format!("{suffix} ")
        }
    }

    /// Applies a selection and returns the number of characters it added.
    /// Backspace undoes the last selection; an empty slot does nothing.
    pub(crate) fn apply(&mut self, selected: SymbolId, suggestions: &[Suggestion]) -> usize {
        let text = if selected.is_backspace() {
            if let Some(mark) = self.marks.pop() {
                self.typed.truncate(mark);
            }
            return 0;
        } else if let Some(c) = selected.as_char() {
            c.to_string()
        } else {
            match selected.slot_index().and_then(|i| suggestions.get(i)) {
                Some(s) => self.word_commit(&s.word),
                None => return 0,
            }
        };
        self.marks.push(self.typed.len());
        self.typed.push_str(&text);
        text.len()
    }

    /// Drops erroneous text and commits the next target character
    /// directly. Returns that character's target index.
    pub(crate) fn force_next(&mut self) -> usize {
        while !self.on_track() {
            let mark = self.marks.pop().expect("empty text is on track");
            self.typed.truncate(mark);
        }
        let index = self.typed.len();
        self.marks.push(index);
        self.typed.push(self.target.as_bytes()[index] as char);
        index
    }
}
