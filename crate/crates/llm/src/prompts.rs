//! Prompt templates for distillation, triple extraction and agent duets.

pub const DISTILL_SYSTEM: &str =
    "You respond with a concise scientific summary, including reasoning. You never use names or references.";

pub const TITLE_SYSTEM: &str =
    "You are a scientist who writes a scientific paper. You never use names or citations.";

pub fn summary_prompt(text: &str) -> String {
    format!(
        "In a matter-of-fact voice, rewrite this \"{text}\". The writing must stand on its own and provide all background needed, and include details.  Do not include names, figures, plots or citations in your response, only facts."
    )
}

pub fn bullets_prompt(summary: &str) -> String {
    format!(
        "Provide a bullet point list of the key facts and reasoning in \"{summary}\". The writing must stand on its own and provide all background needed, and include details. Do not include figures, plots or citations in your response. Think step by step."
    )
}

pub fn title_prompt(summary: &str) -> String {
    format!(
        "Provide a one-sentence title of this text: \"{summary}\". Make sure the title can be understood fully without any other context. Do not use the word \"title\", just provide the answer."
    )
}

pub const ONTOLOGY_SYSTEM: &str = r#"You are a network ontology graph maker who extracts terms and their relations from a given context, using category theory. You are provided with a context chunk (delimited by ```) Your task is to extract the ontology of terms mentioned in the given context. These terms should represent the key concepts as per the context, including well-defined and widely used names of materials, systems, methods.

Format your output as a list of JSON. Each element of the list contains a pair of terms and the relation between them, like the following:
[
   {
       "node_1": "A concept from extracted ontology",
       "node_2": "A related concept from extracted ontology",
       "edge": "Relationship between the two concepts, node_1 and node_2, succinctly described"
   }, {...}
]

Examples:
Context: ```Silk is a strong natural fiber used to catch prey in a web. Beta-sheets control its strength.```
[
   {
       "node_1": "spider silk",
       "node_2": "fiber",
       "edge": "is"
   },
   {
       "node_1": "beta-sheets",
       "node_2": "strength",
       "edge": "control"
   },
   {
       "node_1": "silk",
       "node_2": "prey",
       "edge": "catches"
   }
]

Analyze the text carefully and produce around 10 triplets, making sure they reflect consistent ontologies."#;

pub fn ontology_prompt(context: &str) -> String {
    format!("Context: ```{context}``` \n\nOutput: ")
}

pub fn refine_prompt(context: &str, response: &str) -> String {
    format!(
        "Read this context: ```{context}```.\n\nRead this ontology: ```{response}```.\n\nImprove the ontology by renaming nodes so that they have consistent labels that are widely used in the field of materials science."
    )
}

pub const FORMAT_SYSTEM: &str =
    "You convert ontologies into strictly valid JSON. You never add commentary.";

pub fn format_prompt(ontology: &str) -> String {
    format!(
        "Rewrite this ontology as a JSON list: ```{ontology}```.\n\nEach element must be an object with exactly the keys \"node_1\", \"node_2\" and \"edge\". Return only the JSON list."
    )
}

pub const CHEF_PERSONA: &str = "You are a chef. You are taking part in a discussion, from the perspective of a chef who owns a restaurant.

Keep your answers brief, and always challenge statements in a provocative way.

As a creative individual, you inject ideas from other fields and push the boundaries.";

pub const ENGINEER_PERSONA: &str = "You are a creative engineer with knowledge in biology, chemistry and mathematics.

You are taking part in a discussion.

Keep your answers brief, but accurate, and creative. You come up with excellent ideas and new directions of thought, always logical. ";

pub const DEFAULT_DUET_QUESTION: &str = "As an inventor, describe how we could combine the areas of biological materials with food. Specifically explore the use of synthetic protein materials, and touch upon areas of texture, mechanics, color and structure, as well as flavor and taste.";

pub fn follow_up_prompt(question: &str, response: &str) -> String {
    format!(
        "Consider this question and response.\n\n### Question: {question}\n\n### Response: {response}\n\n### Instruction: Respond with a SINGLE follow-up question that critically challenges the response. \n\nDO NOT answer the question or comment on it yet. \n\nThe single question is: "
    )
}

pub fn conversation_summary_prompt(conversation: &str) -> String {
    format!(
        "Carefully read this conversation: \n\n<<<{conversation}>>>\n\nAccurately summarize the conversation and identify the key points made.\n\nThink step by step: "
    )
}

pub fn key_points_prompt(conversation: &str) -> String {
    format!(
        "Carefully read this conversation: \n\n<<<{conversation}>>>\n\nList the salient insights of the conversation as bullet points."
    )
}

pub fn takeaway_prompt(question: &str) -> String {
    format!(
        "Identify the single most important takeaway in the conversation and how it answers the original question, <<<{question}>>>."
    )
}
